#include <cstdio>

#include "oasflow/oasflow.hpp"

int main() {
  std::puts("oasflow: CLI under construction");
  return 0;
}
