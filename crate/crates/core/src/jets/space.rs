use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::Var;

/// Which monomials a jet keeps: `|αx| ≤ max_x`, `|αy| ≤ max_y` and
/// `|αx| + |αy| ≤ max_total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub max_x: usize,
    pub max_y: usize,
    pub max_total: usize,
}

impl Truncation {
    pub const fn new(max_x: usize, max_y: usize, max_total: usize) -> Self {
        Self {
            max_x,
            max_y,
            max_total,
        }
    }

    /// Box truncation with no extra bound on the total order.
    pub const fn box_orders(max_x: usize, max_y: usize) -> Self {
        Self::new(max_x, max_y, max_x + max_y)
    }

    pub fn validity(&self) -> Validity {
        Validity {
            x: self.max_x as i32,
            y: self.max_y as i32,
            total: self.max_total as i32,
        }
    }

    fn admits(&self, ox: usize, oy: usize) -> bool {
        ox <= self.max_x && oy <= self.max_y && ox + oy <= self.max_total
    }
}

/// Region of monomials whose coefficients are exact for a particular value.
/// Negative bounds mean no coefficient is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub x: i32,
    pub y: i32,
    pub total: i32,
}

impl Validity {
    pub fn contains(&self, ox: usize, oy: usize) -> bool {
        (ox as i32) <= self.x && (oy as i32) <= self.y && (ox + oy) as i32 <= self.total
    }

    pub fn min(self, o: Self) -> Self {
        Self {
            x: self.x.min(o.x),
            y: self.y.min(o.y),
            total: self.total.min(o.total),
        }
    }

    pub(crate) fn after_diff(self, var: Var) -> Self {
        match var {
            Var::X(_) => Self {
                x: self.x - 1,
                total: self.total - 1,
                ..self
            },
            Var::Y(_) => Self {
                y: self.y - 1,
                total: self.total - 1,
                ..self
            },
        }
    }

    pub(crate) fn covers(&self, t: &Truncation) -> bool {
        self.x >= t.max_x as i32 && self.y >= t.max_y as i32 && self.total >= t.max_total as i32
    }
}

type Exponents = Vec<u8>;

/// Monomial basis and precomputed product/derivative tables for jets in
/// `2n` variables (the first `n` are `x`, the last `n` are `y`).
#[derive(Debug)]
pub struct JetSpace {
    dim: usize,
    trunc: Truncation,
    monomials: Vec<Exponents>,
    orders: Vec<(usize, usize)>,
    index: HashMap<Exponents, usize>,
    /// `mul_rows[i]` lists `(j, k)` with `m_i + m_j = m_k`.
    mul_rows: Vec<Vec<(u32, u32)>>,
    /// Per variable: `(src, dst, factor)` with `∂ m_src = factor · m_dst`.
    deriv: Vec<Vec<(u32, u32, f64)>>,
}

impl PartialEq for JetSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.trunc == other.trunc
    }
}

impl JetSpace {
    pub fn new(dim: usize, trunc: Truncation) -> Self {
        let nvars = 2 * dim;
        let mut monomials = Vec::new();
        for total in 0..=trunc.max_total {
            let mut current = vec![0u8; nvars];
            enumerate(&mut current, 0, total, &mut |m: &Exponents| {
                let ox: usize = m[..dim].iter().map(|&e| e as usize).sum();
                let oy: usize = m[dim..].iter().map(|&e| e as usize).sum();
                if trunc.admits(ox, oy) {
                    monomials.push(m.clone());
                }
            });
        }
        let orders: Vec<(usize, usize)> = monomials
            .iter()
            .map(|m| {
                (
                    m[..dim].iter().map(|&e| e as usize).sum(),
                    m[dim..].iter().map(|&e| e as usize).sum(),
                )
            })
            .collect();
        let index: HashMap<Exponents, usize> = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();

        let mut mul_rows = vec![Vec::new(); monomials.len()];
        for (i, mi) in monomials.iter().enumerate() {
            for (j, mj) in monomials.iter().enumerate() {
                let (oi, oj) = (orders[i], orders[j]);
                if !trunc.admits(oi.0 + oj.0, oi.1 + oj.1) {
                    continue;
                }
                let sum: Exponents = mi.iter().zip(mj).map(|(a, b)| a + b).collect();
                if let Some(&k) = index.get(&sum) {
                    mul_rows[i].push((j as u32, k as u32));
                }
            }
        }

        let deriv = (0..nvars)
            .map(|v| {
                monomials
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m[v] > 0)
                    .map(|(src, m)| {
                        let mut d = m.clone();
                        d[v] -= 1;
                        (src as u32, index[&d] as u32, m[v] as f64)
                    })
                    .collect()
            })
            .collect();

        Self {
            dim,
            trunc,
            monomials,
            orders,
            index,
            mul_rows,
            deriv,
        }
    }

    /// Process-wide cached space for `(dim, trunc)`.
    pub fn shared(dim: usize, trunc: Truncation) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, Truncation), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        Arc::clone(
            guard
                .entry((dim, trunc))
                .or_insert_with(|| Arc::new(JetSpace::new(dim, trunc))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    pub fn orders(&self, i: usize) -> (usize, usize) {
        self.orders[i]
    }

    pub fn index_of(&self, ax: &[usize], ay: &[usize]) -> Option<usize> {
        if ax.len() != self.dim || ay.len() != self.dim {
            return None;
        }
        let key: Option<Exponents> = ax.iter().chain(ay).map(|&e| u8::try_from(e).ok()).collect();
        self.index.get(&key?).copied()
    }

    pub(crate) fn unit_index(&self, var: Var) -> Option<usize> {
        let mut e = vec![0u8; 2 * self.dim];
        e[self.var_slot(var)] = 1;
        self.index.get(&e).copied()
    }

    pub(crate) fn mul_row(&self, i: usize) -> &[(u32, u32)] {
        &self.mul_rows[i]
    }

    pub(crate) fn derivative_table(&self, var: Var) -> &[(u32, u32, f64)] {
        &self.deriv[self.var_slot(var)]
    }

    fn var_slot(&self, var: Var) -> usize {
        match var {
            Var::X(k) => {
                assert!(k < self.dim);
                k
            }
            Var::Y(k) => {
                assert!(k < self.dim);
                self.dim + k
            }
        }
    }
}

fn enumerate(current: &mut Exponents, pos: usize, remaining: usize, f: &mut impl FnMut(&Exponents)) {
    if pos + 1 == current.len() {
        current[pos] = remaining as u8;
        f(current);
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e as u8;
        enumerate(current, pos + 1, remaining - e, f);
    }
    current[pos] = 0;
}
