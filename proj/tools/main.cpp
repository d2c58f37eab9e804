#include "halpern/cli.hpp"

int main(int argc, char** argv) { return halpern::cli::main_entry(argc, argv); }
