/* Source for the export-conformance check: compiled locally, then the fake
 * decompiler environment in test_export.py models what the decompiler
 * recovers from the stripped build. */
#include <stdio.h>

void printLine(const char *s) { puts(s); }

void foo(void) {
  signed char a, b, c, d;
  int e;
  fscanf(stdin, "%d", &a);
  b = a;
  c = 0;
  a = 1;
  e = b + 1;
  printf("%d", (unsigned long)e);
  if (b == 127) {
    printLine("Data value is too large");
  } else {
    c = b + 1;
    printf("Result is %d", (int)c);
  }
  d = c + 1;
  printf("Result is %d", (int)d);
  return;
}

int main(void) {
  foo();
  return 0;
}
