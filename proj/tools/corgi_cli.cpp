// Placeholder main; replaced once the model stack lands.
int main() { return 0; }
