#include "ldm4ts/cli/cli.hpp"

int main(int argc, char** argv) { return ldm4ts::cli::run(argc, argv); }
