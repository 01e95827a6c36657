#include <assert.h>

int sum_below(int n) {
    int sum = 0;
    for (int i = 0; i < n; i++) {
        sum = sum + i;
    }
    return sum;
}

int main() {
    int total = sum_below(10);
    assert(total == 45);
    return 0;
}
