use crate::error::{Error, Result};

/// Joint distribution `p(x_i, y_j)`, row-major `n × m`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    pub n: usize,
    pub m: usize,
    pub p: Vec<f64>,
}

fn check_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Data(format!("{what} is empty")));
    }
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Data(format!("{what} has invalid probability {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Data(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl DiscreteJoint {
    pub fn new(n: usize, m: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * m {
            return Err(Error::Shape(format!("{n}x{m} joint given {} entries", p.len())));
        }
        check_pmf(&p, "joint distribution")?;
        Ok(Self { n, m, p })
    }

    /// Normalise non-negative weights into a joint.
    pub fn from_weights(n: usize, m: usize, w: &[f64]) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Data("joint weights must have positive mass".into()));
        }
        let mut p: Vec<f64> = w.iter().map(|v| v / total).collect();
        // absorb rounding so the entries sum to one within the check tolerance
        let err = 1.0 - p.iter().sum::<f64>();
        if let Some(mx) = p.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *mx += err;
        }
        Self::new(n, m, p)
    }

    pub fn product(px: &[f64], py: &[f64]) -> Result<Self> {
        check_pmf(px, "p(x)")?;
        check_pmf(py, "p(y)")?;
        let p: Vec<f64> = px.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect();
        Self::from_weights(px.len(), py.len(), &p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.m + j]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.m).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.m).map(|j| (0..self.n).map(|i| self.get(i, j)).sum()).collect()
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `H(X) = -Σ p ln p` in nats, with `0 ln 0 = 0`.
pub fn entropy(pmf: &[f64]) -> Result<f64> {
    check_pmf(pmf, "pmf")?;
    Ok(-pmf.iter().map(|&p| plogp(p)).sum::<f64>())
}

/// `H(X|Y) = -Σ p(x,y) ln p(x|y)`.
pub fn conditional_entropy(j: &DiscreteJoint) -> f64 {
    let py = j.marginal_y();
    let mut h = 0.0;
    for x in 0..j.n {
        for (y, &q) in py.iter().enumerate() {
            let p = j.get(x, y);
            if p > 0.0 {
                h -= p * (p / q).ln();
            }
        }
    }
    h
}

/// `I(X;Y) = H(X) - H(X|Y)`.
pub fn mutual_information(j: &DiscreteJoint) -> f64 {
    let hx = -j.marginal_x().iter().map(|&p| plogp(p)).sum::<f64>();
    hx - conditional_entropy(j)
}

/// `I(X;Y) = Σ p(x,y) ln(p(x|y) / p(x))`, the double-sum form.
pub fn mutual_information_sum(j: &DiscreteJoint) -> f64 {
    let (px, py) = (j.marginal_x(), j.marginal_y());
    let mut i = 0.0;
    for x in 0..j.n {
        for y in 0..j.m {
            let p = j.get(x, y);
            if p > 0.0 {
                i += p * ((p / py[y]) / px[x]).ln();
            }
        }
    }
    i
}
