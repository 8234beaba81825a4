#define N 32
#define T float

void syrk(T alpha, T beta, T C[N][N], T A[N][N]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j <= i; j++) {
      C[i][j] *= beta;
      for (int k = 0; k < N; k++) {
        C[i][j] += alpha * A[i][k] * A[j][k];
      }
    }
  }
}
