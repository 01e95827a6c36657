#include <assert.h>

unsigned set_bit(unsigned word, int pos) {
    return word | (1u << pos);
}

unsigned clear_bit(unsigned word, int pos) {
    return word & ~(1u << pos);
}

int main() {
    unsigned w = clear_bit(set_bit(0u, 3), 3);
    assert(w == 0u);
    return 0;
}
