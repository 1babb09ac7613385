//! Uniform access to named parameter tensors, shared by the optimizer, the
//! checkpoint format and gradient checking.

pub trait Parameters {
    /// Visits every tensor in a fixed order as a flat slice.
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, t| out.extend_from_slice(t));
        out
    }

    /// Overwrites all tensors from a flat vector produced by `flatten`.
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut(&mut |_, t| {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        });
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, t| t.iter_mut().for_each(|x| *x = value));
    }

    /// `self += alpha * other` for a structurally identical `other`.
    fn add_scaled(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut off = 0;
        self.visit_mut(&mut |_, t| {
            let n = t.len();
            for (x, g) in t.iter_mut().zip(&flat[off..off + n]) {
                *x += alpha * g;
            }
            off += n;
        });
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }

    /// Names and sizes in visiting order.
    fn layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t.len())));
        out
    }
}
