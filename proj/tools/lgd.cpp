#include <iostream>

#include "lgd/cli.hpp"

int main(int argc, char** argv) { return lgd::cli::main_entry(argc, argv, std::cout, std::cerr); }
