#include "commands.hpp"

int main(int argc, char** argv) { return opatt::cli::run(argc, argv); }
