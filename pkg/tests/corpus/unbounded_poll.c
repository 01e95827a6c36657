#include <assert.h>

extern int __VERIFIER_nondet_int(void);

int poll_until_ready(void) {
    int ticks = 0;
    while (1) {
        int ready = __VERIFIER_nondet_int();
        if (ready) {
            break;
        }
        ticks = ticks + 1;
    }
    return ticks;
}

int main() {
    int waited = poll_until_ready();
    assert(waited >= 0);
    return 0;
}
