#include <assert.h>

int grid_count(int rows, int cols) {
    int cells = 0;
    for (int r = 0; r < rows; r++) {
        for (int c = 0; c < cols; c++) {
            cells = cells + 1;
        }
    }
    return cells;
}

int main() {
    int n = grid_count(3, 4);
    assert(n == 12);
    return 0;
}
