#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) { return hrtfgraph::cli::run(std::vector<std::string>(argv, argv + argc)); }
