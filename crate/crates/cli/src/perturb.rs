//! Perturbation scripts: external force windows applied during execution.
//!
//! ```text
//! # start_tick,end_tick,arm,f1,..,fD
//! 100,300,0,0,10
//! ```
//!
//! A window applies its force on ticks `start ≤ k < end`; overlapping windows add.

use anyhow::{bail, Context};
use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub arm: usize,
    pub force: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub windows: Vec<Window>,
}

impl Script {
    pub fn parse(text: &str, dim: usize, arms: usize) -> anyhow::Result<Self> {
        let mut windows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("start") {
                continue;
            }
            let n = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 + dim {
                bail!("line {n}: expected {} columns, found {}", 3 + dim, fields.len());
            }
            let int = |s: &str, what: &str| s.parse::<usize>().with_context(|| format!("line {n}: bad {what} `{s}`"));
            let (start, end, arm) = (int(fields[0], "start")?, int(fields[1], "end")?, int(fields[2], "arm")?);
            if end < start {
                bail!("line {n}: window ends before it starts");
            }
            if arm >= arms {
                bail!("line {n}: arm {arm} out of range");
            }
            let force = fields[3..]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .with_context(|| format!("line {n}: bad force `{s}`"))
                })
                .collect::<anyhow::Result<Vec<f64>>>()?;
            windows.push(Window { start, end, arm, force });
        }
        Ok(Self { windows })
    }

    pub fn load(path: &std::path::Path, dim: usize, arms: usize) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, dim, arms).with_context(|| format!("in {}", path.display()))
    }

    pub fn force(&self, tick: usize, arm: usize, dim: usize) -> DVector<f64> {
        let mut f = DVector::zeros(dim);
        for w in &self.windows {
            if w.arm == arm && (w.start..w.end).contains(&tick) {
                f += DVector::from_column_slice(&w.force);
            }
        }
        f
    }
}
