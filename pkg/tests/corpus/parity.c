#include <assert.h>

int parity(int n) {
    int p = 0;
    while (n > 0) {
        p = 1 - p;
        n = n - 1;
    }
    return p;
}

int main() {
    int odd = parity(7);
    assert(odd == 1);
    return 0;
}
