#define N 32
#define T float

void bicg(T A[N][N], T s[N], T q[N], T p[N], T r[N]) {
  for (int i = 0; i < N; i++) {
    s[i] = 0;
  }
  for (int i = 0; i < N; i++) {
    q[i] = 0;
    for (int j = 0; j < N; j++) {
      s[j] += r[i] * A[i][j];
      q[i] += A[i][j] * p[j];
    }
  }
}
