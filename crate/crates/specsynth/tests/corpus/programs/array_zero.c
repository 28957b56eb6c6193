void zero_fill(char *p, int n) {
    int i = 0;
    while (i < n) {
        p[i] = 0;
        i = i + 1;
    }
}

int main() {
    char buf[16];
    zero_fill(buf, 16);
    //@ assert buf[0] == 0 && buf[15] == 0;
    return 0;
}
