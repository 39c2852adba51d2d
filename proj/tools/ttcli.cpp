// Command-line front end; subcommands are filled in as the library grows.
#include <cstdio>

int main() {
  std::puts("ttcli: not wired up yet");
  return 0;
}
