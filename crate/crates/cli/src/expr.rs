//! Data expressions over `x`: literals, `x`, `+ - * / ^`, parentheses and the functions
//! `sin cos exp abs min max` (plus the other meval builtins such as `sqrt`, `ln`, `pi`).

use std::str::FromStr;
use std::sync::Arc;

use meval::{Context, Expr};

thread_local! {
    static BUILTINS: Context<'static> = Context::new();
}

/// A parsed expression in the single variable `x`; cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct DataExpr {
    source: String,
    expr: Arc<Expr>,
}

impl std::fmt::Debug for DataExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DataExpr({:?})", self.source)
    }
}

impl PartialEq for DataExpr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl DataExpr {
    /// Parses and test-evaluates at `x = 0`, so unknown names are reported up front.
    pub fn parse(source: &str) -> Result<Self, String> {
        let expr = Expr::from_str(source).map_err(|e| format!("cannot parse expression {source:?}: {e}"))?;
        let parsed = Self { source: source.to_string(), expr: Arc::new(expr) };
        parsed.try_eval(0.0)?;
        Ok(parsed)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, x: f64) -> Result<f64, String> {
        BUILTINS
            .with(|ctx| self.expr.eval_with_context((("x", x), ctx)))
            .map_err(|e| format!("cannot evaluate {:?}: {e}", self.source))
    }

    /// Evaluates at `x`; names were checked at parse time, so failures become NaN.
    pub fn eval(&self, x: f64) -> f64 {
        self.try_eval(x).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        let cases = [
            ("2.5", 1.0, 2.5),
            ("x", -0.5, -0.5),
            ("1 + 2*x - x/4", 2.0, 4.5),
            ("(1 + x) * (1 - x)", 0.5, 0.75),
            ("sin(x) + cos(x)", 0.0, 1.0),
            ("exp(x)", 0.0, 1.0),
            ("abs(x)", -3.0, 3.0),
            ("min(x, 1)", 2.0, 1.0),
            ("max(0, 0.2 - x^2)", 0.5, 0.0),
            ("-1e6", 0.0, -1e6),
        ];
        for (src, x, want) in cases {
            let e = DataExpr::parse(src).unwrap();
            assert!((e.eval(x) - want).abs() < 1e-14, "{src}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DataExpr::parse("1 +").is_err());
        assert!(DataExpr::parse("y + 1").is_err());
        assert!(DataExpr::parse("foo(x)").is_err());
    }

    #[test]
    fn usable_from_other_threads() {
        let e = DataExpr::parse("x * x").unwrap();
        let h = std::thread::spawn(move || e.eval(3.0));
        assert_eq!(h.join().unwrap(), 9.0);
    }
}
