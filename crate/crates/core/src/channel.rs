//! Rayleigh channel realizations, cascaded channels and the gauge transform.
//!
//! One matrix `G` (M×N) describes the BS–RIS link in both directions: its
//! rows are the RIS-to-antenna uplink channels, and by reciprocity the same
//! rows serve as the antenna-to-RIS downlink channels.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::config::{LinkBudget, SystemConfig};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS–RIS channel, M×N.
    pub g: CMatrix,
    /// RIS–UE channels, one length-N vector per UE.
    pub f: Vec<CVector>,
    /// BS–UE channels, one length-M vector per UE.
    pub h: Vec<CVector>,
}

/// Cascaded channels `C_k = G diag(f_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedChannel {
    pub c: Vec<CMatrix>,
}

impl ChannelRealization {
    pub fn bs_antennas(&self) -> usize {
        self.g.nrows()
    }

    pub fn ris_elements(&self) -> usize {
        self.g.ncols()
    }

    pub fn users(&self) -> usize {
        self.f.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let (m, n) = self.g.shape();
        if self.f.len() != self.h.len() {
            return Err(Error::ShapeMismatch {
                what: "UE count",
                expected: format!("{} h vectors", self.f.len()),
                found: self.h.len().to_string(),
            });
        }
        if let Some(bad) = self.f.iter().find(|f| f.len() != n) {
            return Err(Error::ShapeMismatch {
                what: "RIS-UE channel length",
                expected: n.to_string(),
                found: bad.len().to_string(),
            });
        }
        if let Some(bad) = self.h.iter().find(|h| h.len() != m) {
            return Err(Error::ShapeMismatch {
                what: "BS-UE channel length",
                expected: m.to_string(),
                found: bad.len().to_string(),
            });
        }
        Ok(())
    }
}

/// Draws `G`, then every `f_k`, then every `h_k`, row-major within `G`.
pub fn sample_channels(
    cfg: &SystemConfig,
    budget: &LinkBudget,
    stream: &mut RandomStream,
) -> ChannelRealization {
    let (m, n, k) = (cfg.bs_antennas, cfg.ris_elements, cfg.users);
    let mut g = CMatrix::zeros(m, n);
    for row in 0..m {
        for col in 0..n {
            g[(row, col)] = stream.complex_gaussian(budget.rho_g);
        }
    }
    let f = (0..k)
        .map(|_| CVector::from_fn(n, |_, _| stream.complex_gaussian(budget.rho_f)))
        .collect();
    let h = (0..k)
        .map(|_| CVector::from_fn(m, |_, _| stream.complex_gaussian(budget.rho_h)))
        .collect();
    ChannelRealization { g, f, h }
}

/// `G diag(f)`: scales column `n` of `g` by `f[n]`.
pub fn cascade_one(g: &CMatrix, f: &CVector) -> CMatrix {
    let mut c = g.clone();
    for (mut col, &fn_) in c.column_iter_mut().zip(f.iter()) {
        col *= fn_;
    }
    c
}

pub fn cascade(real: &ChannelRealization) -> Result<CascadedChannel> {
    real.check_shapes()?;
    Ok(CascadedChannel {
        c: real.f.iter().map(|f| cascade_one(&real.g, f)).collect(),
    })
}

/// Re-expresses the realization as `G diag(p)`, `f_k ⊙ p⁻¹`; the cascaded
/// channels are unchanged.
pub fn gauge_transform(real: &ChannelRealization, p: &CVector) -> Result<ChannelRealization> {
    real.check_shapes()?;
    if p.len() != real.ris_elements() {
        return Err(Error::ShapeMismatch {
            what: "gauge vector length",
            expected: real.ris_elements().to_string(),
            found: p.len().to_string(),
        });
    }
    if let Some(index) = p.iter().position(|x| *x == C64::new(0.0, 0.0)) {
        return Err(Error::ZeroGauge { index });
    }
    let inv = p.map(|x| x.inv());
    Ok(ChannelRealization {
        g: cascade_one(&real.g, p),
        f: real.f.iter().map(|f| f.component_mul(&inv)).collect(),
        h: real.h.clone(),
    })
}

/// Writes a realization as text.
///
/// Format: a `#` comment line, then one line per matrix of the form
/// `name,rows,cols,re,im,re,im,...` with entries in row-major order.
/// Matrices appear as `G`, then `f0..f{K-1}` (N×1), then `h0..h{K-1}` (M×1).
/// Values use 17 significant digits so a dump reloads bit-exactly.
pub fn write_realization<W: Write>(real: &ChannelRealization, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# ris-core realization v1: name,rows,cols then row-major re,im pairs"
    )?;
    let mut emit = |name: &str, mat: &CMatrix| -> std::io::Result<()> {
        let mut line = format!("{name},{},{}", mat.nrows(), mat.ncols());
        for r in 0..mat.nrows() {
            for c in 0..mat.ncols() {
                let z = mat[(r, c)];
                let _ = write!(line, ",{:.16e},{:.16e}", z.re, z.im);
            }
        }
        writeln!(out, "{line}")
    };
    emit("G", &real.g)?;
    for (k, f) in real.f.iter().enumerate() {
        emit(
            &format!("f{k}"),
            &CMatrix::from_column_slice(f.len(), 1, f.as_slice()),
        )?;
    }
    for (k, h) in real.h.iter().enumerate() {
        emit(
            &format!("h{k}"),
            &CMatrix::from_column_slice(h.len(), 1, h.as_slice()),
        )?;
    }
    Ok(())
}

pub fn read_realization<R: BufRead>(input: R) -> Result<ChannelRealization> {
    let mut g = None;
    let mut f = Vec::new();
    let mut h = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let bad = |message: String| Error::RealizationFormat {
            line: lineno,
            message,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let name = parts.next().unwrap_or_default().to_owned();
        let mut dim = || -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("missing or invalid dimension".into()))
        };
        let rows = dim()?;
        let cols = dim()?;
        let values: Vec<f64> = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        if values.len() != 2 * rows * cols {
            return Err(bad(format!(
                "expected {} values for a {rows}x{cols} matrix, found {}",
                2 * rows * cols,
                values.len()
            )));
        }
        let mat = CMatrix::from_fn(rows, cols, |r, c| {
            let i = 2 * (r * cols + c);
            C64::new(values[i], values[i + 1])
        });
        match name.as_str() {
            "G" => g = Some(mat),
            s if s.starts_with('f') => f.push(CVector::from_column_slice(mat.as_slice())),
            s if s.starts_with('h') => h.push(CVector::from_column_slice(mat.as_slice())),
            other => return Err(bad(format!("unknown matrix name {other:?}"))),
        }
    }
    let g = g.ok_or(Error::RealizationFormat {
        line: 0,
        message: "no G matrix".into(),
    })?;
    let real = ChannelRealization { g, f, h };
    real.check_shapes()?;
    Ok(real)
}
