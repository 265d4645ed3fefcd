//! Exact information quantities on enumerable supports.
//!
//! These are ground truth for tests and for the `verify` suites, not
//! estimators: every expectation is a finite sum over the table.

use rand::Rng;

use crate::error::{Error, Result};

/// Largest table side accepted by [`DiscreteJoint`].
pub const MAX_SUPPORT: usize = 64;

fn xlogy_ratio(p: f64, num: f64, den: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (num / den).ln()
    }
}

fn check_distribution(name: &str, p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Distribution(format!("{name} is empty")));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Distribution(format!("{name} has negative or non-finite mass")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::Distribution(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// A joint probability table `p(x, y)`, rows indexed by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    table: Vec<Vec<f64>>,
    px: Vec<f64>,
    py: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let nx = table.len();
        let ny = table.first().map_or(0, Vec::len);
        if nx == 0 || ny == 0 || nx > MAX_SUPPORT || ny > MAX_SUPPORT {
            return Err(Error::Distribution(format!(
                "joint table must be between 1x1 and {MAX_SUPPORT}x{MAX_SUPPORT}, got {nx}x{ny}"
            )));
        }
        if table.iter().any(|r| r.len() != ny) {
            return Err(Error::Distribution("ragged joint table".into()));
        }
        let flat: Vec<f64> = table.iter().flatten().copied().collect();
        check_distribution("joint table", &flat, 1e-12)?;
        let px = table.iter().map(|r| r.iter().sum()).collect();
        let py = (0..ny).map(|y| table.iter().map(|r| r[y]).sum()).collect();
        Ok(Self { table, px, py })
    }

    /// Dirichlet(1)-like random table (normalised uniform draws).
    pub fn random(nx: usize, ny: usize, rng: &mut impl Rng) -> Result<Self> {
        let raw: Vec<Vec<f64>> = (0..nx)
            .map(|_| (0..ny).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect())
            .collect();
        let total: f64 = raw.iter().flatten().sum();
        Self::new(raw.into_iter().map(|r| r.into_iter().map(|v| v / total).collect()).collect())
    }

    pub fn product(px: &[f64], py: &[f64]) -> Result<Self> {
        check_distribution("p(x)", px, 1e-12)?;
        check_distribution("p(y)", py, 1e-12)?;
        Self::new(px.iter().map(|a| py.iter().map(|b| a * b).collect()).collect())
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn px(&self) -> &[f64] {
        &self.px
    }

    pub fn py(&self) -> &[f64] {
        &self.py
    }

    pub fn nx(&self) -> usize {
        self.table.len()
    }

    pub fn ny(&self) -> usize {
        self.py.len()
    }

    /// The true conditional `p(y|x)`; rows with `p(x) = 0` are uniform.
    pub fn conditional(&self) -> ConditionalTable {
        let ny = self.ny();
        ConditionalTable {
            rows: self
                .table
                .iter()
                .zip(&self.px)
                .map(|(r, &px)| {
                    if px > 0.0 {
                        r.iter().map(|v| v / px).collect()
                    } else {
                        vec![1.0 / ny as f64; ny]
                    }
                })
                .collect(),
        }
    }
}

/// A parametric conditional `q(y|x)`; each row is a distribution over `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    rows: Vec<Vec<f64>>,
}

impl ConditionalTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Distribution("empty conditional table".into()));
        }
        let ny = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ny {
                return Err(Error::Distribution("ragged conditional table".into()));
            }
            check_distribution(&format!("q(y|x={i})"), r, 1e-9)?;
        }
        Ok(Self { rows })
    }

    /// Rows are softmaxes of Gaussian logits with spread `scale`.
    pub fn random(nx: usize, ny: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let rows = (0..nx)
            .map(|_| {
                let logits: Vec<f64> = (0..ny)
                    .map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0))
                    .collect();
                crate::stablemath::softmax(&logits).expect("ny >= 1")
            })
            .collect();
        Self { rows }
    }

    /// `q(y|x) = p(y)` for every `x`.
    pub fn replicated(py: &[f64], nx: usize) -> Self {
        Self {
            rows: vec![py.to_vec(); nx],
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `q(y) = Σ_x p(x) q(y|x)`.
    pub fn marginal(&self, px: &[f64]) -> Vec<f64> {
        let ny = self.rows[0].len();
        (0..ny)
            .map(|y| self.rows.iter().zip(px).map(|(r, p)| p * r[y]).sum())
            .collect()
    }

    fn check_against(&self, j: &DiscreteJoint) -> Result<()> {
        if self.rows.len() != j.nx() || self.rows[0].len() != j.ny() {
            return Err(Error::Distribution(format!(
                "conditional is {}x{}, joint is {}x{}",
                self.rows.len(),
                self.rows[0].len(),
                j.nx(),
                j.ny()
            )));
        }
        Ok(())
    }
}

/// `I(X;Y) = Σ p(x,y) ln [p(x,y) / (p(x) p(y))]` in nats.
pub fn exact_mi(j: &DiscreteJoint) -> f64 {
    let mut mi = 0.0;
    for (x, row) in j.table.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            mi += xlogy_ratio(p, p, j.px[x] * j.py[y]);
        }
    }
    mi.max(0.0)
}

/// `KL(p‖q)` in nats. Requires `q_i = 0 ⇒ p_i = 0`.
pub fn exact_kld(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Distribution("supports differ in size".into()));
    }
    check_distribution("p", p, 1e-9)?;
    check_distribution("q", q, 1e-9)?;
    let mut kl = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 && b == 0.0 {
            return Err(Error::AbsoluteContinuity { index: i, p: a });
        }
        kl += xlogy_ratio(a, a, b);
    }
    Ok(kl.max(0.0))
}

/// Jensen-Shannon divergence in nats, within `[0, ln 2]`.
pub fn exact_jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Distribution("supports differ in size".into()));
    }
    check_distribution("p", p, 1e-9)?;
    check_distribution("q", q, 1e-9)?;
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        js += 0.5 * xlogy_ratio(a, a, m) + 0.5 * xlogy_ratio(b, b, m);
    }
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

/// Barber-Agakov bound `E_{p(x,y)}[ln q(y|x) / p(y)]`.
pub fn ba_bound(j: &DiscreteJoint, q: &ConditionalTable) -> Result<f64> {
    q.check_against(j)?;
    let mut b = 0.0;
    for (x, row) in j.table.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            b += xlogy_ratio(p, q.rows[x][y], j.py[y]);
        }
    }
    Ok(b)
}

/// `E_{p(x,y)}[ln q(y|x) / q(y)] - KL(p(y)‖q(y))` with `q(y) = E_{p(x)}[q(y|x)]`.
pub fn twin_bound(j: &DiscreteJoint, q: &ConditionalTable) -> Result<f64> {
    q.check_against(j)?;
    let qy = q.marginal(&j.px);
    let mut contrastive = 0.0;
    for (x, row) in j.table.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            contrastive += xlogy_ratio(p, q.rows[x][y], qy[y]);
        }
    }
    let kl: f64 = j.py.iter().zip(&qy).map(|(&a, &b)| xlogy_ratio(a, a, b)).sum();
    Ok(contrastive - kl)
}

/// `D*(y) = p(y) / (p(y) + q(y))`; points outside both supports get 1/2.
pub fn optimal_discriminator(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a + b > 0.0 { a / (a + b) } else { 0.5 })
        .collect()
}

fn check_disc(p: &[f64], d: &[f64]) -> Result<()> {
    if p.len() != d.len() {
        return Err(Error::Distribution("discriminator table size differs from support".into()));
    }
    Ok(())
}

/// `E_p[ln D] - E_p[ln(1 - D)]`; equal to `KL(p‖q)` at `D = D*`.
///
/// Points where `p = 0` do not contribute. Elsewhere `D` must lie in `(0, 1)`.
pub fn kld_via_discriminator(p: &[f64], d: &[f64]) -> Result<f64> {
    check_disc(p, d)?;
    let mut acc = 0.0;
    for (&w, &di) in p.iter().zip(d) {
        if w == 0.0 {
            continue;
        }
        if !(di > 0.0 && di < 1.0) {
            return Err(Error::Domain(format!("discriminator output {di} outside (0, 1)")));
        }
        acc += w * (di.ln() - (1.0 - di).ln());
    }
    Ok(acc)
}

/// `½ E_p[ln D] + ½ E_q[ln(1 - D)] + ln 2`; equal to `JSD(p‖q)` at `D = D*`.
pub fn jsd_via_discriminator(p: &[f64], q: &[f64], d: &[f64]) -> Result<f64> {
    check_disc(p, d)?;
    check_disc(q, d)?;
    let mut acc = std::f64::consts::LN_2;
    for ((&a, &b), &di) in p.iter().zip(q).zip(d) {
        if a > 0.0 {
            if di <= 0.0 {
                return Err(Error::Domain(format!("discriminator output {di} with p > 0")));
            }
            acc += 0.5 * a * di.ln();
        }
        if b > 0.0 {
            if di >= 1.0 {
                return Err(Error::Domain(format!("discriminator output {di} with q > 0")));
            }
            acc += 0.5 * b * (1.0 - di).ln();
        }
    }
    Ok(acc)
}
