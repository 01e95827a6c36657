#include <assert.h>

int scale(int x) {
    return x * 3;
}

int offset(int x) {
    return x + 7;
}

int pipeline(int x) {
    return offset(scale(x));
}

int main() {
    int out = pipeline(5);
    assert(out == 22);
    return 0;
}
