use crate::error::{Error, Result};

/// Scores split by trial label.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
}

impl ScoreSet {
    pub fn new(target: Vec<f64>, nontarget: Vec<f64>) -> Result<Self> {
        if target.iter().chain(&nontarget).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite score".into()));
        }
        Ok(Self { target, nontarget })
    }

    pub fn from_labelled(scores: &[f64], labels: &[bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!("{} scores for {} trials", scores.len(), labels.len())));
        }
        let (mut t, mut n) = (Vec::new(), Vec::new());
        for (&s, &l) in scores.iter().zip(labels) {
            if l { t.push(s) } else { n.push(s) }
        }
        Self::new(t, n)
    }

    fn check(&self) -> Result<()> {
        if self.target.is_empty() || self.nontarget.is_empty() {
            return Err(Error::Data(format!(
                "metrics need both classes, have {} target and {} non-target scores",
                self.target.len(),
                self.nontarget.len()
            )));
        }
        Ok(())
    }
}

/// Error rates when accepting every score `>= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// One operating point per distinct score in ascending order, then `+inf`.
/// FAR is non-increasing and FRR non-decreasing along the result.
pub fn sweep(s: &ScoreSet) -> Result<Vec<OperatingPoint>> {
    s.check()?;
    let mut all: Vec<(f64, bool)> = s
        .target
        .iter()
        .map(|&v| (v, true))
        .chain(s.nontarget.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (s.target.len() as f64, s.nontarget.len() as f64);
    let (mut below_t, mut below_n) = (0usize, 0usize);
    let mut out = Vec::with_capacity(all.len() + 1);
    let mut i = 0;
    while i < all.len() {
        let thr = all[i].0;
        out.push(OperatingPoint {
            threshold: thr,
            far: (nn - below_n as f64) / nn,
            frr: below_t as f64 / nt,
        });
        while i < all.len() && all[i].0 == thr {
            if all[i].1 { below_t += 1 } else { below_n += 1 }
            i += 1;
        }
    }
    out.push(OperatingPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(out)
}

/// Equal error rate, linearly interpolated between the two operating
/// points where FRR − FAR changes sign.
pub fn compute_eer(s: &ScoreSet) -> Result<f64> {
    let pts = sweep(s)?;
    let d = |p: &OperatingPoint| p.frr - p.far;
    let i = pts.iter().position(|p| d(p) >= 0.0).expect("last point has FRR 1, FAR 0");
    if d(&pts[i]) == 0.0 || i == 0 {
        return Ok(pts[i].far);
    }
    let (a, b) = (&pts[i - 1], &pts[i]);
    let t = -d(a) / (d(b) - d(a));
    Ok(a.far + t * (b.far - a.far))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcfParams {
    pub c_frr: f64,
    pub c_far: f64,
    pub p_target: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            c_frr: 1.0,
            c_far: 1.0,
            p_target: 0.01,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_frr > 0.0 && self.c_far > 0.0 && self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::Config(format!(
                "DCF needs positive costs and a prior in (0, 1), got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn cost(&self, p: &OperatingPoint) -> f64 {
        self.c_frr * self.p_target * p.frr + self.c_far * (1.0 - self.p_target) * p.far
    }
}

/// Minimum detection cost over the sweep and the first threshold attaining it.
pub fn compute_dcf(s: &ScoreSet, params: &DcfParams) -> Result<(f64, f64)> {
    params.validate()?;
    let pts = sweep(s)?;
    let mut best = (f64::INFINITY, f64::INFINITY);
    for p in &pts {
        let c = params.cost(p);
        if c < best.0 {
            best = (c, p.threshold);
        }
    }
    Ok(best)
}

/// Inverse standard normal CDF by Acklam's rational approximation
/// (relative error below 1.2e-9), with `p` clamped to `[1e-6, 1 - 1e-6]`.
pub fn probit(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const LOW: f64 = 0.02425;
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    if p == 0.5 {
        return 0.0;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetPoint {
    pub far: f64,
    pub frr: f64,
    pub probit_far: f64,
    pub probit_frr: f64,
}

pub fn compute_det(s: &ScoreSet) -> Result<Vec<DetPoint>> {
    Ok(sweep(s)?
        .into_iter()
        .map(|p| DetPoint {
            far: p.far,
            frr: p.frr,
            probit_far: probit(p.far),
            probit_frr: probit(p.frr),
        })
        .collect())
}

/// `far,frr,probit_far,probit_frr` with a header row.
pub fn det_csv(points: &[DetPoint]) -> String {
    let mut s = String::from("far,frr,probit_far,probit_frr\n");
    for p in points {
        s.push_str(&format!("{:?},{:?},{:?},{:?}\n", p.far, p.frr, p.probit_far, p.probit_frr));
    }
    s
}
