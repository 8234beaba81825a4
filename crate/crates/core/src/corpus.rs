//! Benchmark kernels used by tests, the DSE and the CLI.

use std::fmt;
use std::str::FromStr;

use crate::frontend;
use crate::ir::{ElemKind, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Bicg,
    Gemm,
    Gesummv,
    Syr2k,
    Syrk,
    Trmm,
}

impl Kernel {
    pub const ALL: [Kernel; 6] = [Kernel::Bicg, Kernel::Gemm, Kernel::Gesummv, Kernel::Syr2k, Kernel::Syrk, Kernel::Trmm];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Bicg => "bicg",
            Kernel::Gemm => "gemm",
            Kernel::Gesummv => "gesummv",
            Kernel::Syr2k => "syr2k",
            Kernel::Syrk => "syrk",
            Kernel::Trmm => "trmm",
        }
    }

    fn body(self) -> &'static str {
        match self {
            Kernel::Bicg => BICG,
            Kernel::Gemm => GEMM,
            Kernel::Gesummv => GESUMMV,
            Kernel::Syr2k => SYR2K,
            Kernel::Syrk => SYRK,
            Kernel::Trmm => TRMM,
        }
    }

    /// C source at problem size `n`.
    pub fn source(self, n: usize, elem: ElemKind) -> String {
        let t = match elem {
            ElemKind::F32 => "float",
            ElemKind::I32 => "int",
        };
        format!("#define N {n}\n#define T {t}\n\n{}", self.body())
    }

    pub fn program(self, n: usize, elem: ElemKind) -> Program {
        frontend::parse_and_raise(&self.source(n, elem)).expect("corpus kernel parses")
    }
}

/// Five element-wise stages where the first stage's buffer also feeds the
/// fourth, bypassing the two in between.
pub fn bypass_chain_source(n: usize) -> String {
    format!(
        "#define N {n}
void chain(float x[N], float y[N]) {{
  float b0[N];
  float b1[N];
  float b2[N];
  float b3[N];
  for (int i = 0; i < N; i++) b0[i] = x[i] + 1.0f;
  for (int i = 0; i < N; i++) b1[i] = b0[i] + 1.0f;
  for (int i = 0; i < N; i++) b2[i] = b1[i] + 1.0f;
  for (int i = 0; i < N; i++) b3[i] = b2[i] + b0[i];
  for (int i = 0; i < N; i++) y[i] = b3[i] + 1.0f;
}}
"
    )
}

pub fn bypass_chain(n: usize) -> Program {
    frontend::parse_and_raise(&bypass_chain_source(n)).expect("bypass chain parses")
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown kernel `{s}`"))
    }
}

const GEMM: &str = "void gemm(T alpha, T beta, T C[N][N], T A[N][N], T B[N][N]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j < N; j++) {
      C[i][j] *= beta;
      for (int k = 0; k < N; k++) {
        C[i][j] += alpha * A[i][k] * B[k][j];
      }
    }
  }
}
";

const SYRK: &str = "void syrk(T alpha, T beta, T C[N][N], T A[N][N]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j <= i; j++) {
      C[i][j] *= beta;
      for (int k = 0; k < N; k++) {
        C[i][j] += alpha * A[i][k] * A[j][k];
      }
    }
  }
}
";

const SYR2K: &str = "void syr2k(T alpha, T beta, T C[N][N], T A[N][N], T B[N][N]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j <= i; j++) {
      C[i][j] *= beta;
      for (int k = 0; k < N; k++) {
        C[i][j] += A[j][k] * alpha * B[i][k] + B[j][k] * alpha * A[i][k];
      }
    }
  }
}
";

const TRMM: &str = "void trmm(T alpha, T A[N][N], T B[N][N]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j < N; j++) {
      for (int k = i + 1; k < N; k++) {
        B[i][j] += A[k][i] * B[k][j];
      }
      B[i][j] = alpha * B[i][j];
    }
  }
}
";

const BICG: &str = "void bicg(T A[N][N], T s[N], T q[N], T p[N], T r[N]) {
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
";

const GESUMMV: &str = "void gesummv(T alpha, T beta, T A[N][N], T B[N][N], T tmp[N], T x[N], T y[N]) {
  for (int i = 0; i < N; i++) {
    tmp[i] = 0;
    y[i] = 0;
    for (int j = 0; j < N; j++) {
      tmp[i] = A[i][j] * x[j] + tmp[i];
      y[i] = B[i][j] * x[j] + y[i];
    }
    y[i] = alpha * tmp[i] + beta * y[i];
  }
}
";
