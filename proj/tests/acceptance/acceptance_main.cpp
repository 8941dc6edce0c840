// Acceptance suite: one pass/fail line per criterion. Placeholder while the
// core modules come up; populated below.
#include <cstdio>

int main() {
  std::printf("acceptance suite placeholder\n");
  return 1;
}
