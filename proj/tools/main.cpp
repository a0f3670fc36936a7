#include <iostream>

#include "gzsl/app.hpp"

int main(int argc, char** argv) {
  return gzsl::app::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
