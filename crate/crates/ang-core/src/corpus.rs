//! Bundled program corpus: the four conditional-measure programs, the small
//! named programs the battery uses, and the deterministic unit tier.

/// Three-state HMM with 16 observations and 17 state predicts.
pub const HMM_SOURCE: &str = include_str!("../../../programs/hmm.ang");

/// CRP mixture of normal-gamma components over 10 points.
pub const DP_MIXTURE_SOURCE: &str = include_str!("../../../programs/dp-mixture.ang");

/// Poisson branching with a deterministic fib branch.
pub const BRANCHING_SOURCE: &str = include_str!("../../../programs/branching.ang");

/// Polar-method normal sampler with a conjugate mean posterior.
pub const MARSAGLIA_SOURCE: &str = include_str!("../../../programs/marsaglia.ang");

/// Bundled program lookup by the name the CLI and benches use.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "hmm" => Some(HMM_SOURCE),
        "dp-mixture" => Some(DP_MIXTURE_SOURCE),
        "branching" => Some(BRANCHING_SOURCE),
        "marsaglia" => Some(MARSAGLIA_SOURCE),
        _ => None,
    }
}

pub const BUNDLED_NAMES: [&str; 4] = ["hmm", "dp-mixture", "branching", "marsaglia"];

/// Two-trace flip program: P(x = true | y) = 1/(1 + e^(-1/2)) = 0.62246.
pub const FLIP_TWO_TRACE_SOURCE: &str = "\
[assume x (flip 0.5)]
[observe (normal (if x 1 0) 1) 1]
[predict x]
";

/// Conjugate single-Gaussian program; log evidence = -0.5 ln(4 pi).
pub const EVIDENCE_SOURCE: &str = "\
[assume x (normal 0 1)]
[observe (normal x 1) 0]
[predict x]
";

/// A deterministic program with its expected predict output, printed.
pub struct UnitProgram {
    pub name: &'static str,
    pub source: &'static str,
    pub expected: &'static [(&'static str, &'static str)],
}

macro_rules! unit {
    ($name:literal, $src:literal, $($label:literal => $want:literal),+ $(,)?) => {
        UnitProgram { name: $name, source: $src, expected: &[$(($label, $want)),+] }
    };
}

/// Unit tier: arithmetic, closures, recursion, mem, cond, and list ops,
/// all randomness-free with exact expected values.
pub const UNIT_PROGRAMS: &[UnitProgram] = &[
    unit!("arith-sum", "[predict (+ 1 2 3)]", "(+ 1 2 3)" => "6"),
    unit!("arith-nested", "[predict (* (+ 1 2) (- 10 4))]", "(* (+ 1 2) (- 10 4))" => "18"),
    unit!("arith-div", "[predict (/ 7 2)]", "(/ 7 2)" => "3.5"),
    unit!("arith-negate", "[predict (- 5)]", "(- 5)" => "-5"),
    unit!("arith-float", "[predict (* 2.5 4)]", "(* 2.5 4)" => "10"),
    unit!("compare-chain", "[predict (< 1 2 3)] [predict (< 1 3 2)]",
        "(< 1 2 3)" => "true", "(< 1 3 2)" => "false"),
    unit!("compare-eq", "[predict (= 2 2 2)] [predict (>= 3 3 1)]",
        "(= 2 2 2)" => "true", "(>= 3 3 1)" => "true"),
    unit!("min-max", "[predict (max 1 7 3)] [predict (min 2 -4)]",
        "(max 1 7 3)" => "7", "(min 2 -4)" => "-4"),
    unit!("sqrt", "[predict (sqrt 16)]", "(sqrt 16)" => "4"),
    unit!("pow", "[predict (pow 2 10)]", "(pow 2 10)" => "1024"),
    unit!("abs-floor", "[predict (abs -3.5)] [predict (floor 2.9)]",
        "(abs -3.5)" => "3.5", "(floor 2.9)" => "2"),
    unit!("log-exp", "[predict (log (exp 3))]", "(log (exp 3))" => "3"),
    unit!("not", "[predict (not (< 2 1))] [predict (not 5)]",
        "(not (< 2 1))" => "true", "(not 5)" => "false"),
    unit!("if-only-false-is-false",
        "[predict (if 0 1 2)] [predict (if (list) 1 2)]",
        "(if 0 1 2)" => "1", "(if (list) 1 2)" => "1"),
    unit!("closure-square", "[assume sq (lambda (x) (* x x))] [predict (sq 7)]",
        "(sq 7)" => "49"),
    unit!("closure-capture",
        "[assume make-adder (lambda (n) (lambda (x) (+ x n)))]
         [assume add5 (make-adder 5)]
         [predict (add5 37)]",
        "(add5 37)" => "42"),
    unit!("closure-shadow", "[assume x 10] [predict (let ((x 2)) (* x x))]",
        "(let ((x 2)) (* x x))" => "4"),
    unit!("higher-order",
        "[assume twice (lambda (f x) (f (f x)))]
         [predict (twice (lambda (y) (* 3 y)) 2)]",
        "(twice (lambda (y) (* 3 y)) 2)" => "18"),
    unit!("recursion-factorial",
        "[assume fact (lambda (n) (if (< n 2) 1 (* n (fact (- n 1)))))]
         [predict (fact 10)]",
        "(fact 10)" => "3628800"),
    unit!("recursion-fib",
        "[assume fib (lambda (n) (if (< n 2) 1 (+ (fib (- n 1)) (fib (- n 2)))))]
         [predict (fib 12)]",
        "(fib 12)" => "233"),
    unit!("recursion-accumulator",
        "[assume sum-to (lambda (n acc) (if (= n 0) acc (sum-to (- n 1) (+ acc n))))]
         [predict (sum-to 100 0)]",
        "(sum-to 100 0)" => "5050"),
    unit!("begin-order", "[predict (begin 1 2 3)]", "(begin 1 2 3)" => "3"),
    unit!("begin-define", "[predict (begin (define z 4) (* z z))]",
        "(begin (define z 4) (* z z))" => "16"),
    unit!("let-parallel-inits",
        "[assume a 1] [predict (let ((a 10) (b a)) b)]",
        "(let ((a 10) (b a)) b)" => "1"),
    unit!("let-define-body",
        "[predict (let ((x 2)) (define y (* x 3)) (+ x y))]",
        "(let ((x 2)) (define y (* x 3)) (+ x y))" => "8"),
    unit!("cond-dispatch",
        "[assume classify (lambda (n)
           (cond ((< n 0) (quote neg)) ((= n 0) (quote zero)) (else (quote pos))))]
         [predict (classify -3)] [predict (classify 0)] [predict (classify 9)]",
        "(classify -3)" => "neg", "(classify 0)" => "zero", "(classify 9)" => "pos"),
    unit!("cond-fallthrough", "[predict (cond ((> 1 2) 1))]",
        "(cond ((> 1 2) 1))" => "()"),
    unit!("quote-list", "[predict (quote (1 2 3))]", "(quote (1 2 3))" => "(1 2 3)"),
    unit!("quote-symbol", "[predict (quote hello)]", "(quote hello)" => "hello"),
    unit!("list-car-cdr",
        "[predict (car (list 1 2))] [predict (cdr (list 1 2))]",
        "(car (list 1 2))" => "1", "(cdr (list 1 2))" => "(2)"),
    unit!("list-cons", "[predict (cons 0 (list 1 2))]",
        "(cons 0 (list 1 2))" => "(0 1 2)"),
    unit!("list-count", "[predict (count (list 1 2 3 4))]",
        "(count (list 1 2 3 4))" => "4"),
    unit!("list-null", "[predict (null? (list))] [predict (null? (list 1))]",
        "(null? (list))" => "true", "(null? (list 1))" => "false"),
    unit!("list-unique", "[predict (unique (list 1 2 1 3 2))]",
        "(unique (list 1 2 1 3 2))" => "(1 2 3)"),
    unit!("list-sum-recursion",
        "[assume sum-list (lambda (xs) (if (null? xs) 0 (+ (car xs) (sum-list (cdr xs)))))]
         [predict (sum-list (list 1 2 3 4 5))]",
        "(sum-list (list 1 2 3 4 5))" => "15"),
    unit!("list-map-recursion",
        "[assume my-map (lambda (f xs)
           (if (null? xs) (list) (cons (f (car xs)) (my-map f (cdr xs)))))]
         [predict (my-map (lambda (x) (* x x)) (list 1 2 3))]",
        "(my-map (lambda (x) (* x x)) (list 1 2 3))" => "(1 4 9)"),
    unit!("mem-deduplicates",
        "[assume f (mem (lambda (x) (* x 10)))] [predict (+ (f 2) (f 2))]",
        "(+ (f 2) (f 2))" => "40"),
    unit!("mem-recursive-fib",
        "[assume mfib (mem (lambda (n) (if (< n 2) 1 (+ (mfib (- n 1)) (mfib (- n 2))))))]
         [predict (mfib 20)]",
        "(mfib 20)" => "10946"),
    unit!("string-value", "[predict \"hi\"]", "\"hi\"" => "\"hi\""),
];
