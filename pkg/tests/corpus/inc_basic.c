#include <assert.h>

int increment(int x) {
    return x + 1;
}

int main() {
    int n = 5;
    int r = increment(n);
    assert(r > n);
    return 0;
}
