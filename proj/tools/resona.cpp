#include "resona/cli.hpp"

int main(int argc, char** argv) { return resona::cli::main(argc, argv); }
