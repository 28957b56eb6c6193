void swap(int *a, int *b) {
    int tmp = *a;
    *a = *b;
    *b = tmp;
}

int main() {
    int x = 3;
    int y = 5;
    swap(&x, &y);
    //@ assert x == 5 && y == 3;
    return 0;
}
