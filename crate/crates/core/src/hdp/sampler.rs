//! Direct-assignment collapsed Gibbs sampler for the HDP mixture.
//!
//! Topic-word distributions are integrated out against a symmetric
//! Dirichlet(eta). The corpus-level stick weights `beta` over the active
//! topics plus the unrepresented remainder `beta_u` are kept explicitly and
//! resampled each sweep from the table counts of the franchise
//! representation, drawn with the usual Antoniak auxiliary scheme.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

/// Prior on gamma when concentrations are resampled: Gamma(shape, rate).
const GAMMA_PRIOR: (f64, f64) = (1.0, 0.1);
/// Prior on alpha when concentrations are resampled.
const ALPHA_PRIOR: (f64, f64) = (1.0, 1.0);

#[derive(Clone)]
pub(crate) struct Snapshot {
    pub z: Vec<Vec<usize>>,
    pub beta: Vec<f64>,
    pub active: Vec<usize>,
    pub alpha: f64,
}

pub(crate) struct Sampler<'a> {
    docs: &'a [Vec<usize>],
    vocab_size: usize,
    pub alpha: f64,
    pub gamma: f64,
    eta: f64,
    pub z: Vec<Vec<usize>>,
    n_kw: Vec<Vec<u32>>,
    n_k: Vec<u32>,
    n_dk: Vec<Vec<u32>>,
    pub beta: Vec<f64>,
    beta_u: f64,
    /// Active slots in creation order.
    pub active: Vec<usize>,
    free: Vec<usize>,
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    pub fn new(docs: &'a [Vec<usize>], vocab_size: usize, alpha: f64, gamma: f64, eta: f64, rng: ChaCha8Rng) -> Self {
        Sampler {
            docs,
            vocab_size,
            alpha,
            gamma,
            eta,
            z: docs.iter().map(|d| vec![usize::MAX; d.len()]).collect(),
            n_kw: Vec::new(),
            n_k: Vec::new(),
            n_dk: vec![Vec::new(); docs.len()],
            beta: Vec::new(),
            beta_u: 1.0,
            active: Vec::new(),
            free: Vec::new(),
            cumulative: Vec::new(),
            rng,
        }
    }

    #[inline]
    fn ndk(&self, d: usize, k: usize) -> u32 {
        self.n_dk[d].get(k).copied().unwrap_or(0)
    }

    fn add(&mut self, d: usize, w: usize, k: usize) {
        let row = &mut self.n_dk[d];
        if row.len() <= k {
            row.resize(k + 1, 0);
        }
        row[k] += 1;
        self.n_kw[k][w] += 1;
        self.n_k[k] += 1;
    }

    fn remove(&mut self, d: usize, w: usize, k: usize) {
        self.n_dk[d][k] -= 1;
        self.n_kw[k][w] -= 1;
        self.n_k[k] -= 1;
        if self.n_k[k] == 0 {
            self.retire(k);
        }
    }

    fn retire(&mut self, k: usize) {
        self.active.retain(|&a| a != k);
        self.beta_u += self.beta[k];
        self.beta[k] = 0.0;
        self.free.push(k);
    }

    /// Opens a topic, breaking a Beta(1, gamma) share off the remainder stick.
    fn spawn(&mut self) -> usize {
        let k = match self.free.pop() {
            Some(k) => k,
            None => {
                self.n_kw.push(vec![0; self.vocab_size]);
                self.n_k.push(0);
                self.beta.push(0.0);
                self.n_k.len() - 1
            }
        };
        let b = Beta::new(1.0, self.gamma).expect("gamma > 0").sample(&mut self.rng);
        self.beta[k] = b * self.beta_u;
        self.beta_u *= 1.0 - b;
        self.active.push(k);
        k
    }

    /// Conditional draw for one token whose own counts are already removed.
    fn draw_topic(&mut self, d: usize, w: usize) -> usize {
        let v_eta = self.vocab_size as f64 * self.eta;
        self.cumulative.clear();
        let mut total = 0.0;
        for &k in &self.active {
            let prior = self.ndk(d, k) as f64 + self.alpha * self.beta[k];
            let like = (self.n_kw[k][w] as f64 + self.eta) / (self.n_k[k] as f64 + v_eta);
            total += prior * like;
            self.cumulative.push(total);
        }
        total += self.alpha * self.beta_u / self.vocab_size as f64;
        let u = self.rng.random::<f64>() * total;
        match self.cumulative.iter().position(|&c| u < c) {
            Some(j) => self.active[j],
            None => self.spawn(),
        }
    }

    /// Seats each document whole on one topic, drawn CRP-style from the
    /// document's predictive likelihood under the topics seated so far.
    pub fn initialize(&mut self) {
        let v_eta = self.vocab_size as f64 * self.eta;
        let mut docs_on: Vec<f64> = Vec::new();
        let mut seen = vec![0u32; self.vocab_size];
        let mut logw: Vec<f64> = Vec::new();
        for d in 0..self.docs.len() {
            if self.docs[d].is_empty() {
                continue;
            }
            let predictive = |n_kw: Option<&[u32]>, n_k: u32, seen: &mut [u32]| {
                let mut lp = 0.0;
                for (i, &w) in self.docs[d].iter().enumerate() {
                    let c = n_kw.map_or(0, |r| r[w]) + seen[w];
                    lp += ((c as f64 + self.eta) / (n_k as f64 + i as f64 + v_eta)).ln();
                    seen[w] += 1;
                }
                for &w in &self.docs[d] {
                    seen[w] = 0;
                }
                lp
            };
            logw.clear();
            for &k in &self.active {
                logw.push(docs_on[k].ln() + predictive(Some(&self.n_kw[k]), self.n_k[k], &mut seen));
            }
            logw.push(self.gamma.ln() + predictive(None, 0, &mut seen));
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = logw.iter().map(|l| (l - top).exp()).sum();
            let mut u = self.rng.random::<f64>() * total;
            let mut choice = logw.len() - 1;
            for (j, l) in logw.iter().enumerate() {
                u -= (l - top).exp();
                if u < 0.0 {
                    choice = j;
                    break;
                }
            }
            let k = if choice < self.active.len() { self.active[choice] } else { self.spawn() };
            if docs_on.len() <= k {
                docs_on.resize(k + 1, 0.0);
            }
            docs_on[k] += 1.0;
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                self.z[d][i] = k;
                self.add(d, w, k);
            }
        }
        self.resample_beta();
    }

    pub fn sweep(&mut self) {
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.remove(d, w, old);
                let k = self.draw_topic(d, w);
                self.z[d][i] = k;
                self.add(d, w, k);
            }
        }
    }

    /// Per-topic table counts m_k, summed over documents.
    fn sample_tables(&mut self) -> Vec<u32> {
        let mut m = vec![0u32; self.n_k.len()];
        for d in 0..self.docs.len() {
            for &k in &self.active {
                let n = self.ndk(d, k);
                if n == 0 {
                    continue;
                }
                let ab = self.alpha * self.beta[k];
                // the first customer always opens a table
                let mut tables = 1;
                for j in 1..n {
                    if self.rng.random::<f64>() < ab / (ab + j as f64) {
                        tables += 1;
                    }
                }
                m[k] += tables;
            }
        }
        m
    }

    pub fn resample_beta(&mut self) -> Vec<u32> {
        let m = self.sample_tables();
        let mut draws = Vec::with_capacity(self.active.len());
        for &k in &self.active {
            let g = Gamma::new(m[k] as f64, 1.0).expect("positive table count");
            draws.push(g.sample(&mut self.rng));
        }
        let rest = Gamma::new(self.gamma, 1.0).expect("gamma > 0").sample(&mut self.rng);
        let total: f64 = draws.iter().sum::<f64>() + rest;
        for (&k, g) in self.active.iter().zip(&draws) {
            self.beta[k] = g / total;
        }
        self.beta_u = rest / total;
        m
    }

    /// Auxiliary-variable updates for gamma and alpha under vague Gamma priors.
    pub fn resample_concentrations(&mut self, m: &[u32]) {
        let tables: f64 = self.active.iter().map(|&k| m[k] as f64).sum();
        let k = self.active.len() as f64;

        let (a, b) = GAMMA_PRIOR;
        let x = Beta::new(self.gamma + 1.0, tables).expect("valid").sample(&mut self.rng);
        let rate = b - x.ln();
        let odds = (a + k - 1.0) / (tables * rate);
        let shape = if self.rng.random::<f64>() < odds / (1.0 + odds) { a + k } else { a + k - 1.0 };
        self.gamma = Gamma::new(shape.max(1e-3), 1.0 / rate).expect("valid").sample(&mut self.rng);

        let (a, b) = ALPHA_PRIOR;
        let mut sum_log_w = 0.0;
        let mut sum_s = 0.0;
        for doc in self.docs {
            let n = doc.len() as f64;
            if n == 0.0 {
                continue;
            }
            let w = Beta::new(self.alpha + 1.0, n).expect("valid").sample(&mut self.rng);
            sum_log_w += w.ln();
            if self.rng.random::<f64>() < n / (n + self.alpha) {
                sum_s += 1.0;
            }
        }
        let shape = (a + tables - sum_s).max(1e-3);
        self.alpha = Gamma::new(shape, 1.0 / (b - sum_log_w)).expect("valid").sample(&mut self.rng);
    }

    pub fn word_log_likelihood(&self) -> f64 {
        word_log_likelihood(self.active.iter().map(|&k| (self.n_k[k], self.n_kw[k].as_slice())), self.vocab_size, self.eta)
    }

    /// log p(w | z) + log p(z | alpha, beta): the state's joint density, used to
    /// pick the retained sample.
    pub fn joint_log_probability(&self) -> f64 {
        let mut lp = self.word_log_likelihood();
        let lg_alpha = ln_gamma(self.alpha);
        for (d, doc) in self.docs.iter().enumerate() {
            if doc.is_empty() {
                continue;
            }
            lp += lg_alpha - ln_gamma(self.alpha + doc.len() as f64);
            for &k in &self.active {
                let n = self.ndk(d, k);
                if n > 0 {
                    let ab = self.alpha * self.beta[k];
                    lp += ln_gamma(ab + n as f64) - ln_gamma(ab);
                }
            }
        }
        lp
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { z: self.z.clone(), beta: self.beta.clone(), active: self.active.clone(), alpha: self.alpha }
    }

    pub fn into_rng(self) -> ChaCha8Rng {
        self.rng
    }
}

/// Collapsed log p(w | z) under a symmetric Dirichlet(eta) over `vocab_size`
/// terms, given per-topic totals and word counts.
pub(crate) fn word_log_likelihood<'c>(
    topics: impl Iterator<Item = (u32, &'c [u32])>,
    vocab_size: usize,
    eta: f64,
) -> f64 {
    let v_eta = vocab_size as f64 * eta;
    let lg_v_eta = ln_gamma(v_eta);
    let lg_eta = ln_gamma(eta);
    let mut lp = 0.0;
    for (n, row) in topics {
        if n == 0 {
            continue;
        }
        lp += lg_v_eta - ln_gamma(n as f64 + v_eta);
        for &c in row {
            if c > 0 {
                lp += ln_gamma(c as f64 + eta) - lg_eta;
            }
        }
    }
    lp
}

/// Counts rebuilt from a snapshot, used for the final extraction.
pub(crate) struct Counts {
    pub n_kw: Vec<Vec<u32>>,
    pub n_k: Vec<u32>,
    pub n_dk: Vec<Vec<u32>>,
}

impl Counts {
    pub fn from_assignments(docs: &[Vec<usize>], z: &[Vec<usize>], slots: usize, vocab_size: usize) -> Self {
        let mut c = Counts {
            n_kw: vec![vec![0; vocab_size]; slots],
            n_k: vec![0; slots],
            n_dk: vec![vec![0; slots]; docs.len()],
        };
        for (d, (doc, zd)) in docs.iter().zip(z).enumerate() {
            for (&w, &k) in doc.iter().zip(zd) {
                c.n_kw[k][w] += 1;
                c.n_k[k] += 1;
                c.n_dk[d][k] += 1;
            }
        }
        c
    }
}

/// Moves every token currently on a dropped topic onto one of `keep`,
/// drawing from the collapsed conditional restricted to the survivors.
#[allow(clippy::too_many_arguments)]
pub(crate) fn reassign_constrained(
    docs: &[Vec<usize>],
    z: &mut [Vec<usize>],
    counts: &mut Counts,
    keep: &[usize],
    beta: &[f64],
    alpha: f64,
    eta: f64,
    rng: &mut ChaCha8Rng,
) {
    let vocab_size = counts.n_kw.first().map_or(0, Vec::len);
    let v_eta = vocab_size as f64 * eta;
    let mut is_kept = vec![false; counts.n_k.len()];
    for &k in keep {
        is_kept[k] = true;
    }
    let mut cumulative = Vec::with_capacity(keep.len());
    for (d, doc) in docs.iter().enumerate() {
        for (i, &w) in doc.iter().enumerate() {
            let old = z[d][i];
            if is_kept[old] {
                continue;
            }
            counts.n_kw[old][w] -= 1;
            counts.n_k[old] -= 1;
            counts.n_dk[d][old] -= 1;
            cumulative.clear();
            let mut total = 0.0;
            for &k in keep {
                let prior = counts.n_dk[d][k] as f64 + alpha * beta[k];
                let like = (counts.n_kw[k][w] as f64 + eta) / (counts.n_k[k] as f64 + v_eta);
                total += prior * like;
                cumulative.push(total);
            }
            let u = rng.random::<f64>() * total;
            let j = cumulative.iter().position(|&c| u < c).unwrap_or(keep.len() - 1);
            let k = keep[j];
            z[d][i] = k;
            counts.n_kw[k][w] += 1;
            counts.n_k[k] += 1;
            counts.n_dk[d][k] += 1;
        }
    }
}
