#define N 32
#define T float

void gemm(T alpha, T beta, T C[N][N], T A[N][N], T B[N][N]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j < N; j++) {
      C[i][j] *= beta;
      for (int k = 0; k < N; k++) {
        C[i][j] += alpha * A[i][k] * B[k][j];
      }
    }
  }
}
