use crate::demo::{DemoOptions, Demonstration};
use crate::error::{Error, Result};

/// Smallest accepted number of samples.
pub const MIN_POINTS: usize = 50;
/// Duration of the generated stroke [s].
pub const DURATION: f64 = 4.0;

const CONTROL: [[f64; 2]; 13] = [
    [0.30, 1.00],
    [0.55, 1.00],
    [0.70, 0.85],
    [0.65, 0.65],
    [0.50, 0.55],
    [0.38, 0.45],
    [0.32, 0.52],
    [0.38, 0.60],
    [0.60, 0.42],
    [0.70, 0.25],
    [0.60, 0.05],
    [0.40, 0.00],
    [0.30, 0.02],
];

const DENSE_PER_SPAN: usize = 2000;

/// Synthetic two-hump stroke with a single self-crossing between the humps.
#[derive(Debug, Clone)]
pub struct LetterB {
    pub demo: Demonstration,
    /// Crossing point of the polyline.
    pub intersection: [f64; 2],
    /// Index of the segment `(i, i + 1)` crossed on the first pass.
    pub first_pass: usize,
    /// Index of the segment crossed on the second pass.
    pub second_pass: usize,
}

fn catmull_rom(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2], p3: [f64; 2], t: f64) -> [f64; 2] {
    let t2 = t * t;
    let t3 = t2 * t;
    let mut out = [0.0; 2];
    for k in 0..2 {
        out[k] = 0.5
            * (2.0 * p1[k]
                + (p2[k] - p0[k]) * t
                + (2.0 * p0[k] - 5.0 * p1[k] + 4.0 * p2[k] - p3[k]) * t2
                + (3.0 * p1[k] - p0[k] - 3.0 * p2[k] + p3[k]) * t3);
    }
    out
}

fn dense_curve() -> Vec<[f64; 2]> {
    let n = CONTROL.len();
    let at = |i: isize| CONTROL[i.clamp(0, n as isize - 1) as usize];
    let mut pts = Vec::with_capacity((n - 1) * DENSE_PER_SPAN + 1);
    for s in 0..n - 1 {
        let i = s as isize;
        for k in 0..DENSE_PER_SPAN {
            let t = k as f64 / DENSE_PER_SPAN as f64;
            pts.push(catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), t));
        }
    }
    pts.push(CONTROL[n - 1]);
    pts
}

fn resample(dense: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    let mut cum = Vec::with_capacity(dense.len());
    cum.push(0.0);
    for w in dense.windows(2) {
        let l = cum.last().copied().unwrap_or(0.0) + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cum.push(l);
    }
    let total = cum[cum.len() - 1];
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 { ((s - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (dense[seg], dense[seg + 1]);
        out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
    }
    out
}

/// Proper crossing of segments `ab` and `cd`, with the parameters along each.
pub(crate) fn segment_intersection(
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    d: [f64; 2],
) -> Option<(f64, f64)> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [d[0] - c[0], d[1] - c[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-15 {
        return None;
    }
    let qp = [c[0] - a[0], c[1] - a[1]];
    let t = (qp[0] * s[1] - qp[1] * s[0]) / denom;
    let u = (qp[0] * r[1] - qp[1] * r[0]) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((t, u))
}

/// Generates the stroke with `n_points` arc-length-uniform samples over [`DURATION`].
pub fn generate_letter_b(n_points: usize) -> Result<LetterB> {
    generate_letter_b_timed(n_points, DURATION)
}

/// Same stroke drawn over `duration` seconds.
pub fn generate_letter_b_timed(n_points: usize, duration: f64) -> Result<LetterB> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
    }
    if n_points < MIN_POINTS {
        return Err(Error::TooFewPoints {
            required: MIN_POINTS,
            got: n_points,
        });
    }
    let pts = resample(&dense_curve(), n_points);
    let mut crossing = None;
    'outer: for i in 0..n_points - 1 {
        for j in i + 2..n_points - 1 {
            if let Some((t, _)) = segment_intersection(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                let p = [
                    pts[i][0] + t * (pts[i + 1][0] - pts[i][0]),
                    pts[i][1] + t * (pts[i + 1][1] - pts[i][1]),
                ];
                crossing = Some((p, i, j));
                break 'outer;
            }
        }
    }
    let (intersection, first_pass, second_pass) = crossing
        .ok_or_else(|| Error::InvalidInput("generated stroke has no self-crossing".into()))?;
    let times = (0..n_points)
        .map(|i| duration * i as f64 / (n_points - 1) as f64)
        .collect();
    let demo = Demonstration::with_options(
        2,
        pts.iter().flatten().copied().collect(),
        times,
        DemoOptions::default(),
    )?;
    Ok(LetterB {
        demo,
        intersection,
        first_pass,
        second_pass,
    })
}
