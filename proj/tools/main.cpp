#include "uattr/cli/commands.hpp"

int main(int argc, char** argv) { return uattr::cli::main_entry(argc, argv); }
