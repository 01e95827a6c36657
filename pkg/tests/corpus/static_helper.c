#include <assert.h>

static int square(int x) {
    return x * x;
}

int sum_of_squares(int a, int b) {
    return square(a) + square(b);
}

int main() {
    int s = sum_of_squares(3, 4);
    assert(s == 25);
    return 0;
}
