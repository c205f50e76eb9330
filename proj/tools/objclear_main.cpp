#include "objclear/cli.hpp"

int main(int argc, char** argv) { return objclear::cli::run(argc, argv); }
