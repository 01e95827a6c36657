#include <assert.h>

int array_max(int *buf, int len) {
    int best = buf[0];
    for (int i = 1; i < len; i++) {
        if (buf[i] > best) {
            best = buf[i];
        }
    }
    return best;
}

int main() {
    int data[5] = {3, 9, 1, 7, 2};
    int m = array_max(data, 5);
    assert(m == 9);
    return 0;
}
