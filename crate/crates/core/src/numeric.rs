//! Small numeric helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sum of terms in descending order of magnitude with compensation.
pub fn sum_descending(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut acc = CompensatedSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// Binomial coefficient as `u128`, `None` on overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Falling factorial `n (n-1) ... (n-k+1)` as a float.
pub fn falling_factorial(n: u64, k: usize) -> f64 {
    (0..k as u64)
        .map(|i| if n >= i { (n - i) as f64 } else { 0.0 })
        .product()
}

/// Unrank a k-combination of `0..n` in colexicographic order.
///
/// Rank `r` maps to the unique `c_1 < ... < c_k` with
/// `r = sum_j C(c_j, j)` (combinatorial number system).
pub fn unrank_combination(mut rank: u128, k: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0usize; k];
    let mut hi = n;
    for j in (1..=k).rev() {
        // largest c < hi with C(c, j) <= rank
        let mut c = hi - 1;
        while binomial_u128(c as u64, j as u64).unwrap_or(u128::MAX) > rank {
            c -= 1;
        }
        rank -= binomial_u128(c as u64, j as u64).unwrap_or(0);
        out[j - 1] = c;
        hi = c;
    }
    out
}

/// Iterate over all strictly increasing k-subsets of `0..n`.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Iterate over all ordered k-tuples of pairwise distinct elements of `0..n`.
pub fn for_each_distinct_tuple(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, k, cur, used, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    if k > n {
        return;
    }
    let mut used = vec![false; n];
    rec(n, k, &mut Vec::with_capacity(k), &mut used, &mut f);
}

/// Permanent of a square matrix given row-major, via Ryser's formula.
pub fn permanent(m: &[f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] + m[1] * m[2],
        _ => {
            let mut total = 0.0;
            for mask in 1u32..(1u32 << k) {
                let mut prod = 1.0;
                for row in 0..k {
                    let mut s = 0.0;
                    for col in 0..k {
                        if mask & (1 << col) != 0 {
                            s += m[row * k + col];
                        }
                    }
                    prod *= s;
                }
                let sign = if (k - mask.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
                total += sign * prod;
            }
            total
        }
    }
}
