#include <cstdio>

int main() {
  std::puts("cli not wired up yet");
  return 0;
}
