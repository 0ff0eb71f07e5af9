//! Flat variable layout of the SCOPF program.

/// Offsets of one scenario's variables in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioBlock {
    pub p: usize,
    pub q: usize,
    pub vm: usize,
    pub va: usize,
    /// Redispatch `Δ_c`; absent in the base case.
    pub delta: Option<usize>,
    /// Participation weights; present only when they are optimized.
    pub alpha: Option<usize>,
}

/// `[p0, q0, vm0, va0]` followed by `[p_c, q_c, vm_c, va_c, Δ_c, (α_c)]`
/// for every contingency scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub n_gen: usize,
    pub n_bus: usize,
    pub blocks: Vec<ScenarioBlock>,
    pub n_vars: usize,
}

impl Layout {
    pub fn new(n_gen: usize, n_bus: usize, n_scenarios: usize, optimize_alpha: bool) -> Self {
        let mut blocks = Vec::with_capacity(n_scenarios);
        let mut at = 0;
        for c in 0..n_scenarios {
            let p = at;
            let q = p + n_gen;
            let vm = q + n_gen;
            let va = vm + n_bus;
            at = va + n_bus;
            let delta = (c > 0).then(|| {
                at += 1;
                at - 1
            });
            let alpha = (c > 0 && optimize_alpha).then(|| {
                at += n_gen;
                at - n_gen
            });
            blocks.push(ScenarioBlock { p, q, vm, va, delta, alpha });
        }
        Self {
            n_gen,
            n_bus,
            blocks,
            n_vars: at,
        }
    }

    /// Closed-form variable count.
    pub fn count(n_gen: usize, n_bus: usize, n_scenarios: usize, optimize_alpha: bool) -> usize {
        let base = 2 * n_gen + 2 * n_bus;
        let per = base + 1 + if optimize_alpha { n_gen } else { 0 };
        base + n_scenarios.saturating_sub(1) * per
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_construction() {
        for (g, n, c, opt) in [(6, 30, 13, false), (6, 30, 13, true), (1, 2, 1, false), (3, 5, 2, true)] {
            let l = Layout::new(g, n, c, opt);
            assert_eq!(l.n_vars, Layout::count(g, n, c, opt));
            let last = l.blocks.last().unwrap();
            assert!(last.va + n <= l.n_vars);
        }
    }

    #[test]
    fn blocks_are_contiguous() {
        let l = Layout::new(2, 3, 2, true);
        assert_eq!(l.blocks[0].va + 3, l.blocks[1].p);
        assert_eq!(l.blocks[1].delta, Some(l.blocks[1].va + 3));
        assert_eq!(l.blocks[1].alpha, Some(l.blocks[1].va + 4));
        assert_eq!(l.n_vars, 10 + 10 + 1 + 2);
    }
}
