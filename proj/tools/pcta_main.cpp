#include "pcta/cli.hpp"

int main(int argc, char** argv) { return pcta::run_cli(argc, argv); }
