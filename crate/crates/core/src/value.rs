//! A common interface for everything that assigns values to beliefs.

/// A real-valued function on the belief simplex.
pub trait ValueFunction {
    fn value(&self, b: &[f64]) -> f64;
}

/// Adapts a closure into a [`ValueFunction`].
pub struct FnValue<F>(pub F);

impl<F: Fn(&[f64]) -> f64> ValueFunction for FnValue<F> {
    fn value(&self, b: &[f64]) -> f64 {
        (self.0)(b)
    }
}

impl<V: ValueFunction + ?Sized> ValueFunction for &V {
    fn value(&self, b: &[f64]) -> f64 {
        (**self).value(b)
    }
}

impl<V: ValueFunction + ?Sized> ValueFunction for Box<V> {
    fn value(&self, b: &[f64]) -> f64 {
        (**self).value(b)
    }
}
