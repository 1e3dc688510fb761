#include <iostream>

#include "avgk/experiment.hpp"

int main(int argc, char** argv) { return avgk::run_cli(argc, argv, std::cout, std::cerr); }
