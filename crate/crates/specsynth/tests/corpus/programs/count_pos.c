int is_pos(int x) {
    if (x > 0) {
        return 1;
    }
    return 0;
}

int count_pos(int *a, int n) {
    int c = 0;
    int i = 0;
    while (i < n) {
        c = c + is_pos(a[i]);
        i = i + 1;
    }
    return c;
}

int main() {
    int a[4] = {3, -1, 7, 0};
    int c = count_pos(a, 4);
    //@ assert c == 2;
    return 0;
}
