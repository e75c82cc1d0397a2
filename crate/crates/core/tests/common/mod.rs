#![allow(dead_code)]

use std::io::Write;

use polyfact::cli::{parse_factorization_in, parse_poly, parse_poly_in};
use polyfact::{Factorization, MultiPoly, C64};

pub fn xy() -> Vec<String> {
    vec!["x".to_string(), "y".to_string()]
}

pub fn poly(s: &str) -> MultiPoly {
    parse_poly_in(s, &xy()).unwrap()
}

pub fn factored(s: &str) -> Factorization {
    parse_factorization_in(s, &xy()).unwrap()
}

/// Rounded data near (x + 2/3)(y + 5/6)(x + 6/7 y).
pub fn example_f() -> MultiPoly {
    poly("x^2*y + 0.857143*x*y^2 + 0.833333*x^2 + 1.38095*x*y + 0.571429*y^2 + 0.555556*x + 0.476190*y")
}

/// Its numerical factorization as printed (7 digits).
pub fn example_fhat() -> Factorization {
    factored("0.9999994 * (x + 0.6666667) * (y + 0.8333333) * (x + 0.8571429*y)")
}

/// The nearest factorable polynomial from the same table.
pub fn example_f3() -> Factorization {
    factored("0.9999997 * (x + 0.66666728) * (x*y + 0.83333331*x + 0.7142836*y + 0.8571432*y^2)")
}

/// The five-factorization example. The y^6 coefficient is -1: with the -2
/// that a literal reading of the grouped term gives, the data sits 7e-2 away
/// from every construction below instead of at the listed data errors.
pub fn p1() -> MultiPoly {
    poly(
        "x^7*y + x^5*y^3 + x^6 - x*y^7 - x^3*y^5 - 3*x^2*y^4 + 6*x^2*y^2 \
         + 2*(x^3*y^3 - x^2*y^6 + x^6*y^2 - x*y^5 + x^4) - y^6 \
         + 7*x^4*y^2 + 4*x^5*y + 0.999001*x*y^3 + 1.998002001*x*y + 4.999001*x^3*y \
         + 2.999001*y^2 - 1.000999*x^2 \
         + 0.001*(y^3 + x^3 + 3*x*y^2 + x^3*y^2 + 3*x^2*y + x^4*y + x*y^4 + x^2*y^3 + 2*y + 2*x) \
         - 2.001997998999",
    )
}

/// p2 ... p5 as factorizations.
pub fn p_constructions() -> Vec<Factorization> {
    vec![
        factored(
            "(x*y + 1) * (0.001*x^2*y + 6*x^3*y + 2*x^5*y + 0.001*x*y^2 + 2*x^2*y^2 + 0.001*y^3 \
             - 1.000999*x^2 + 2*x^4 - y^6 + x^6 + x^4*y^2 + 4*x*y - x^2*y^4 + 0.001*x^3 \
             + 2.999001*y^2 - 2*x*y^5 - 2.001997999 + 0.002*y + 0.002*x - 2*x*y^3)",
        ),
        factored(
            "(-2*x*y^3 + 2*x*y + 2*x^3*y + x^4 + 2*y^2 - y^4 - 1.000999 + 0.001*y + 0.001*x) \
             * (x^2 + y^2 + 2) * (x*y + 1)",
        ),
        factored(
            "(x^3 - x*y^2 + x + x^2*y - y^3 + y + x^2 - y^2 + 1.001) * (x + y - 1) \
             * (x^2 + y^2 + 2) * (x*y + 1)",
        ),
        factored("(x + y + 1) * (x^2 - y^2 + 1) * (x + y - 1) * (x^2 + y^2 + 2) * (x*y + 1)"),
    ]
}

/// (x-40/9)^10 (x-10/3)^20 (x-20/9)^30 (x-10/9)^40 expanded in binary64.
pub fn rt100_roots() -> Vec<(f64, u32)> {
    vec![(40.0 / 9.0, 10), (10.0 / 3.0, 20), (20.0 / 9.0, 30), (10.0 / 9.0, 40)]
}

pub fn rt100() -> MultiPoly {
    let mut g = parse_poly("1").unwrap();
    for (r, k) in rt100_roots() {
        let lin = MultiPoly::from_terms(
            g.vars(),
            vec![(vec![1], C64::new(1.0, 0.0)), (vec![0], C64::new(-r, 0.0))],
        );
        g = &g * &lin.pow(k);
    }
    g
}

/// One summary line per criterion, written past the test harness capture.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion}: {status}  {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}
