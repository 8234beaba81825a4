//! Native execution of emitted C++ through the system compiler.
//!
//! Values cross the process boundary as raw bits (f32) or decimal (i32), in
//! parameter order, so results compare exactly against the interpreter.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use crate::emit::emit;
use crate::interp::{Buffer, Tape, Val};
use crate::ir::{ElemKind, Param, Program};

const PRELUDE: &str = "#include <cstdio>\n#include <cstdlib>\n#include <cstring>\n\n";

const IO: &str = r#"
static float rdf() {
  unsigned u;
  if (scanf("%x", &u) != 1) exit(3);
  float f;
  memcpy(&f, &u, 4);
  return f;
}
static int rdi() {
  int v;
  if (scanf("%d", &v) != 1) exit(3);
  return v;
}
static void wrf(float f) {
  unsigned u;
  memcpy(&u, &f, 4);
  printf("%08x\n", u);
}
static void wri(int v) { printf("%d\n", v); }
"#;

fn suffix(e: ElemKind) -> &'static str {
    match e {
        ElemKind::F32 => "f",
        ElemKind::I32 => "i",
    }
}

/// A complete program: the emitted design plus a `main` reading inputs from
/// stdin and printing every array parameter afterwards.
pub fn harness(p: &Program) -> Result<String, String> {
    let code = emit(p).map_err(|e| e.to_string())?;
    let f = p.top_function();
    let mut s = format!("{PRELUDE}{code}{IO}\n");
    for q in &f.params {
        if let Param::Array { name, ty, .. } = q {
            s += &format!("static {} g_{name}{};\n", ty.elem.c_name(), ty.shape.iter().map(|e| format!("[{e}]")).collect::<String>());
        }
    }
    s += "\nint main() {\n";
    let mut args = vec![];
    for q in &f.params {
        match q {
            Param::Scalar { name, elem, .. } => {
                s += &format!("  {} s_{name} = rd{}();\n", elem.c_name(), suffix(*elem));
                args.push(format!("s_{name}"));
            }
            Param::Array { name, ty, .. } => {
                let base = format!("(&g_{name}{})", "[0]".repeat(ty.rank()));
                s += &format!("  for (int k = 0; k < {}; k++) {base}[k] = rd{}();\n", ty.num_elements(), suffix(ty.elem));
                args.push(format!("g_{name}"));
            }
        }
    }
    s += &format!("  {}({});\n", f.name, args.join(", "));
    for q in &f.params {
        if let Param::Array { name, ty, .. } = q {
            let base = format!("(&g_{name}{})", "[0]".repeat(ty.rank()));
            s += &format!("  for (int k = 0; k < {}; k++) wr{}({base}[k]);\n", ty.num_elements(), suffix(ty.elem));
        }
    }
    s += "  return 0;\n}\n";
    Ok(s)
}

pub fn compiler_available() -> bool {
    Command::new("g++").arg("--version").stdout(Stdio::null()).stderr(Stdio::null()).status().map_or(false, |s| s.success())
}

/// Compiles the emitted C++ as written, without a harness. Returns compiler diagnostics on failure.
pub fn check_compiles(p: &Program, dir: &Path) -> Result<(), String> {
    let src = dir.join(format!("{}.cpp", p.top));
    std::fs::write(&src, emit(p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let out = Command::new("g++")
        .args(["-std=c++11", "-fsyntax-only", "-Werror=return-type"])
        .arg(&src)
        .output()
        .map_err(|e| format!("g++: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

pub struct NativeBuild {
    exe: PathBuf,
}

/// Compiles the harness for `p` into `dir`.
pub fn build(p: &Program, dir: &Path) -> Result<NativeBuild, String> {
    let src = dir.join(format!("{}_main.cpp", p.top));
    let exe = dir.join(format!("{}_main", p.top));
    std::fs::write(&src, harness(p)?).map_err(|e| e.to_string())?;
    let out = Command::new("g++")
        .args(["-std=c++11", "-O1", "-fwrapv", "-ffp-contract=off", "-o"])
        .arg(&exe)
        .arg(&src)
        .output()
        .map_err(|e| format!("g++: {e}"))?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(NativeBuild { exe })
}

fn put(v: Val, out: &mut String) {
    match v {
        Val::F(f) => out.push_str(&format!("{:08x}\n", f.to_bits())),
        Val::I(i) => out.push_str(&format!("{i}\n")),
    }
}

impl NativeBuild {
    /// Runs on `input` and returns the final parameter values.
    pub fn run(&self, p: &Program, input: &Tape) -> Result<Tape, String> {
        let f = p.top_function();
        let mut stdin = String::new();
        for q in &f.params {
            match q {
                Param::Scalar { name, .. } => put(*input.scalars.get(name).ok_or(format!("missing scalar `{name}`"))?, &mut stdin),
                Param::Array { name, .. } => {
                    for v in &input.arrays.get(name).ok_or(format!("missing array `{name}`"))?.data {
                        put(*v, &mut stdin);
                    }
                }
            }
        }
        let mut child =
            Command::new(&self.exe).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().map_err(|e| e.to_string())?;
        child.stdin.take().unwrap().write_all(stdin.as_bytes()).map_err(|e| e.to_string())?;
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("native run exited with {}", out.status));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let mut words = text.split_whitespace();
        let mut t = Tape { arrays: Default::default(), scalars: input.scalars.clone() };
        for q in &f.params {
            if let Param::Array { name, ty, .. } = q {
                let mut data = Vec::with_capacity(ty.num_elements() as usize);
                for _ in 0..ty.num_elements() {
                    let w = words.next().ok_or("truncated native output")?;
                    data.push(match ty.elem {
                        ElemKind::F32 => Val::F(f32::from_bits(u32::from_str_radix(w, 16).map_err(|e| e.to_string())?)),
                        ElemKind::I32 => Val::I(w.parse().map_err(|e: std::num::ParseIntError| e.to_string())?),
                    });
                }
                t.arrays.insert(name.clone(), Buffer::filled(ty.elem, ty.shape.clone(), data));
            }
        }
        Ok(t)
    }
}
