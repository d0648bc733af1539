//! The acceptance grid: one runner per numbered criterion, grouped into suites.
//!
//! Reports hold counts, booleans and floats rounded to six significant digits, so the JSON
//! summary is identical across runs and thread counts.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use num_rational::Ratio;
use rand::Rng as _;
use serde::Serialize;
use serde_json::{json, Value};

use hfa_core::almost_forms::{centered, symmetry_defect, EpsMultilinearForm, SymmetryInput, SymmetryOutcome, regular_dilate};
use hfa_core::bohr::{bohr_size_bounds, bohr_spectrum_approx, spectrum_k, weak_regularize_fn, BohrSet, BumpFn, Radius};
use hfa_core::fourier::{gowers_norm, u2_identity_check, GroupFn};
use hfa_core::freiman::{audit_naive_extension, freiman_check, naive_extension, robust_subset, walks6_matrix, Graph, PartialMap};
use hfa_core::lattice::{all_subgroups, direct_summand_below};
use hfa_core::poly_torsion::{delta_at, degree_witness, integrate_bilinear, integrate_trilinear, Integration, Monomial, MultilinearForm, PolyPhase};
use hfa_core::progression::{properness_check, tile, CosetProgression, Properness};
use hfa_core::{rng, Character, FinAbGroup, GroupElement, HfaError, TorusValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Tiny,
    Desk,
}

impl Scale {
    pub fn parse(s: &str) -> Option<Scale> {
        match s {
            "tiny" => Some(Scale::Tiny),
            "desk" => Some(Scale::Desk),
            _ => None,
        }
    }

    fn pick<T>(self, desk: T, tiny: T) -> T {
        match self {
            Scale::Desk => desk,
            Scale::Tiny => tiny,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub cap: u64,
    pub samples: u64,
    pub scale: Scale,
}

impl RunConfig {
    pub fn desk(seed: u64) -> Self {
        RunConfig { seed, cap: 1 << 30, samples: 2000, scale: Scale::Desk }
    }

    fn sub_seed(&self, label: &str, i: u64) -> u64 {
        rng::stream(self.seed, label, i).gen()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub checks: u64,
    pub failures: u64,
    /// First failing cases with the seed that reproduces them.
    pub failed_cases: Vec<String>,
    pub details: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub scale: Scale,
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

pub const SUITES: [&str; 5] = ["all", "bohr", "lattice", "poly", "forms"];

pub fn suite_criteria(suite: &str) -> Option<Vec<u8>> {
    Some(match suite {
        "all" => (1..=11).collect(),
        "bohr" => vec![3, 4, 5, 6],
        "lattice" => vec![7],
        "poly" => vec![2, 8],
        "forms" => vec![9, 10],
        _ => return None,
    })
}

pub fn run_suite(suite: &str, cfg: &RunConfig) -> Option<SuiteSummary> {
    let ids = suite_criteria(suite)?;
    let mut criteria: Vec<CriterionReport> = ids.iter().map(|&id| run_criterion(id, cfg)).collect();
    criteria.sort_by_key(|c| c.id);
    Some(SuiteSummary { suite: suite.into(), scale: cfg.scale, seed: cfg.seed, passed: criteria.iter().all(|c| c.passed), criteria })
}

pub fn criterion_name(id: u8) -> &'static str {
    match id {
        1 => "u2_identity",
        2 => "poly_phase_extremality",
        3 => "bohr_size_bounds",
        4 => "spectrum_approximation",
        5 => "bump_fourier_bound",
        6 => "tiling",
        7 => "direct_summand",
        8 => "integration_round_trips",
        9 => "naive_extension",
        10 => "symmetry_argument",
        11 => "robust_subset",
        12 => "determinism",
        _ => "unknown",
    }
}

/// Runs one criterion; errors from the library count as failures of that criterion.
pub fn run_criterion(id: u8, cfg: &RunConfig) -> CriterionReport {
    let mut t = Tally::default();
    let details = match id {
        1 => u2_identity(cfg, &mut t),
        2 => poly_extremality(cfg, &mut t),
        3 => bohr_sizes(cfg, &mut t),
        4 => spectrum(cfg, &mut t),
        5 => bump(cfg, &mut t),
        6 => tiling(cfg, &mut t),
        7 => summands(cfg, &mut t),
        8 => integration(cfg, &mut t),
        9 => extension(cfg, &mut t),
        10 => symmetry(cfg, &mut t),
        11 => robust(cfg, &mut t),
        _ => Err(HfaError::Input(format!("no criterion {id}"))),
    };
    let details = match details {
        Ok(v) => v,
        Err(e) => {
            t.fail(format!("error: {e}"));
            json!({ "error": e.to_string() })
        }
    };
    CriterionReport {
        id,
        name: criterion_name(id).into(),
        passed: t.failures == 0 && t.checks > 0,
        checks: t.checks,
        failures: t.failures,
        failed_cases: t.cases,
        details,
    }
}

#[derive(Default)]
struct Tally {
    checks: u64,
    failures: u64,
    cases: Vec<String>,
}

const MAX_CASES: usize = 10;

impl Tally {
    fn check(&mut self, ok: bool, case: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.fail(case());
        }
    }

    fn fail(&mut self, case: String) {
        self.failures += 1;
        if self.cases.len() < MAX_CASES {
            self.cases.push(case);
        }
    }
}

/// Six significant digits, as a JSON number.
pub fn r6(x: f64) -> Value {
    if !x.is_finite() || x == 0.0 {
        return json!(x.is_finite().then_some(0.0));
    }
    let s = format!("{x:.5e}");
    json!(s.parse::<f64>().unwrap())
}

type R = hfa_core::Result<Value>;

fn u2_identity(cfg: &RunConfig, t: &mut Tally) -> R {
    let count = cfg.scale.pick(200, 20);
    let mut worst = 0.0f64;
    for (gi, factors) in [vec![7], vec![16], vec![4, 8], vec![81]].into_iter().enumerate() {
        let g = FinAbGroup::new(factors)?;
        let seed = cfg.sub_seed("u2_identity", gi as u64);
        for i in 0..count {
            let f = GroupFn::random_bounded(&g, seed, i);
            let r = u2_identity_check(&f)?;
            worst = worst.max(r.gap);
            t.check(r.gap <= 1e-8, || format!("{g} function {i} seed {seed}: gap {}", r.gap));
        }
    }
    Ok(json!({ "functions_per_group": count, "max_gap": r6(worst), "tolerance": 1e-8 }))
}

fn random_poly(d: u32, n: usize, cubic: bool, r: &mut rng::Rng) -> hfa_core::Result<PolyPhase> {
    let coeffs: Vec<(Monomial, i64)> = Monomial::all(n)
        .into_iter()
        .filter(|m| cubic || m.degree() <= 2)
        .map(|m| (m, r.gen_range(0..m.period(d))))
        .collect();
    let m = 3i64 << (d + 2);
    PolyPhase::new(d, n, coeffs, TorusValue::new(r.gen_range(0..m), m))
}

fn poly_extremality(cfg: &RunConfig, t: &mut Tally) -> R {
    let total = cfg.scale.pick(100, 12);
    let shapes = [(2u32, 1usize), (2, 2), (3, 1)];
    let mut deg_le2 = 0;
    let mut worst_u4 = 0.0f64;
    let seed = cfg.sub_seed("poly_extremality", 0);
    let mut r = rng::stream(seed, "poly_grid", 0);
    for case in 0..total {
        let (d, n) = shapes[case % shapes.len()];
        let q = random_poly(d, n, case % 2 == 0, &mut r)?;
        let g = q.group();
        let table = q.table();
        let f = GroupFn::phase(&g, &table);
        let u4 = gowers_norm(&f, 4, cfg.cap, None)?.value;
        worst_u4 = worst_u4.max((u4 - 1.0).abs());
        t.check((u4 - 1.0).abs() <= 1e-9, || format!("case {case} seed {seed}: U4 = {u4}"));
        let u3 = gowers_norm(&f, 3, cfg.cap, None)?.value;
        let low = degree_witness(&g, &table, 2, cfg.cap)?.is_none();
        deg_le2 += low as u64;
        t.check(((u3 - 1.0).abs() <= 1e-9) == low, || format!("case {case} seed {seed}: U3 = {u3}, degree <= 2 is {low}"));
    }
    Ok(json!({ "cases": total, "degree_at_most_2": deg_le2, "max_u4_gap": r6(worst_u4) }))
}

/// Frequency sets of size at most two; for prime `N` one representative per orbit of the
/// unit group, since `x -> u x` maps `B(Gamma)` onto `B(u^-1 Gamma)`.
fn frequency_sets(n: u64, prime: bool) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    if prime {
        out.push(vec![0]);
        out.push(vec![1]);
        out.push(vec![0, 1]);
        out.extend((2..n).map(|s| vec![1, s]));
    } else {
        out.extend((0..n).map(|a| vec![a]));
        out.extend((0..n).flat_map(|a| (a + 1..n).map(move |b| vec![a, b])));
    }
    out
}

fn bohr_sizes(cfg: &RunConfig, t: &mut Tally) -> R {
    let radii = [Radius::new(1, 10), Radius::new(1, 5), Radius::new(1, 3)];
    let mut per_n = BTreeMap::new();
    for (n, prime) in [(12u64, false), (101, false), (1009, true)] {
        let g = FinAbGroup::cyclic(n);
        let sets = frequency_sets(n, prime);
        for freqs in &sets {
            let chars: Vec<Character> = freqs.iter().map(|&f| Character(vec![f])).collect();
            for rho in radii {
                let b = BohrSet::constant(&g, chars.clone(), rho)?;
                let s = bohr_size_bounds(&b, cfg.cap)?;
                t.check(s.lower_holds && s.doubling_holds, || format!("N = {n}, Gamma = {freqs:?}, rho = {rho}: {s:?}"));
            }
        }
        per_n.insert(n.to_string(), sets.len() * radii.len());
    }
    Ok(json!({ "bohr_sets": per_n }))
}

fn spectrum(cfg: &RunConfig, t: &mut Tally) -> R {
    let n = 1009u64;
    let g = FinAbGroup::cyclic(n);
    let probes = cfg.scale.pick(200, 40);
    let mut rows = Vec::new();
    for (ri, r) in [1usize, 2].into_iter().enumerate() {
        for (ei, (eps, eps_half, eta)) in [(0.05, Radius::new(1, 40), Radius::new(1, 640)), (0.01, Radius::new(1, 200), Radius::new(1, 3200))].into_iter().enumerate() {
            let seed = cfg.sub_seed("spectrum", (ri * 2 + ei) as u64);
            let mut rg = rng::stream(seed, "spectrum_fixture", 0);
            let freqs: Vec<Character> = (0..r).map(|_| Character(vec![rg.gen_range(1..n)])).collect();
            let b = BohrSet::constant(&g, freqs.clone(), Radius::new(1, 5))?;
            let (nb, _) = weak_regularize_fn(&b, eps_half, eta, cfg.cap)?;
            let eta_f = *eta.numer() as f64 / *eta.denom() as f64;
            let k = spectrum_k(r, eps, eta_f);
            let mut taus: BTreeSet<u64> = [0u64].into_iter().chain(freqs.iter().map(|c| c.0[0])).collect();
            while taus.len() < probes {
                taus.insert(rg.gen_range(0..n));
            }
            let taus: Vec<Character> = taus.into_iter().map(|x| Character(vec![x])).collect();
            let out = bohr_spectrum_approx(&nb, eta_f, eps, &vec![k; r], &taus, cfg.cap)?;
            let worst = out.iter().map(|row| row.gap).fold(0.0, f64::max);
            for row in &out {
                t.check(row.gap <= eps, || format!("r = {r}, eps = {eps}, seed {seed}, tau = {:?}: gap {}", row.tau, row.gap));
            }
            rows.push(json!({ "r": r, "eps": eps, "eta": eta.to_string(), "k": k, "probes": out.len(), "max_gap": r6(worst) }));
        }
    }
    Ok(json!({ "runs": rows }))
}

/// `int_{-1/2}^{1/2} b(x) cos(2 pi xi x) dx` by 5-point Gauss-Legendre on each linear piece.
fn bump_quadrature(b: &BumpFn, xi: i64) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let cuts = [-0.5, -b.rho - b.eta, -b.rho, b.rho, b.rho + b.eta, 0.5];
    let pieces = 16 + 8 * xi.unsigned_abs() as usize;
    let mut s = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let mid = w[0] + (p as f64 + 0.5) * h;
            for (x, wt) in NODES {
                let u = mid + x * h / 2.0;
                s += wt * h / 2.0 * b.eval(u) * (std::f64::consts::TAU * xi as f64 * u).cos();
            }
        }
    }
    s
}

fn bump(cfg: &RunConfig, t: &mut Tally) -> R {
    let max_xi = cfg.scale.pick(1000, 200);
    let mut worst_ratio = 0.0f64;
    let mut worst_quad = 0.0f64;
    for rho in [0.05, 0.1, 0.2, 0.3, 0.4] {
        for eta in [0.01, 0.02, 0.05, 0.09] {
            let b = BumpFn::new(rho, eta)?;
            for xi in (1..=max_xi).flat_map(|x| [x, -x]) {
                let v = b.fourier(xi).abs();
                let bound = b.fourier_bound(xi);
                worst_ratio = worst_ratio.max(v / bound);
                t.check(v <= bound, || format!("rho = {rho}, eta = {eta}, xi = {xi}: {v} > {bound}"));
            }
            for xi in [0i64, 1, 2, 3, 5, 10, 25, 50, 100] {
                let gap = (bump_quadrature(&b, xi) - b.fourier(xi)).abs();
                worst_quad = worst_quad.max(gap);
                t.check(gap <= 1e-6, || format!("rho = {rho}, eta = {eta}, xi = {xi}: quadrature gap {gap}"));
            }
        }
    }
    Ok(json!({ "grid": 20, "max_xi": max_xi, "max_ratio_to_bound": r6(worst_ratio), "max_quadrature_gap": r6(worst_quad) }))
}

fn tiling(cfg: &RunConfig, t: &mut Tally) -> R {
    let want = cfg.scale.pick(50, 10);
    let seed = cfg.sub_seed("tiling", 0);
    let mut rg = rng::stream(seed, "tile_fixtures", 0);
    let mut done = 0;
    let mut attempts = 0;
    while done < want && attempts < 20 * want {
        attempts += 1;
        let n = rg.gen_range(200u64..2000);
        let g = FinAbGroup::cyclic(n);
        let d = rg.gen_range(1..=2usize);
        let lens: Vec<u64> = (0..d).map(|_| rg.gen_range(4..20)).collect();
        let v2 = lens[0] as i64 + rg.gen_range(0..3);
        let gens: Vec<GroupElement> = [1, v2][..d].iter().map(|&v| g.element(&[v])).collect::<hfa_core::Result<_>>()?;
        let base = g.element(&[rg.gen_range(0..n as i64)])?;
        let c = CosetProgression::new(&g, base, gens, lens.clone(), false, vec![])?;
        let Properness::Proper(c) = properness_check(&c, cfg.cap)? else { continue };
        let eta = Ratio::new(rg.gen_range(1..=4), 4);
        let mut np = Vec::new();
        let mut ell = Vec::new();
        for &nl in &lens {
            let l = rg.gen_range(1..=3u64);
            let max_np = (eta * nl as i64 / d as i64 / l as i64).floor().to_integer().max(1) as u64;
            np.push(rg.gen_range(1..=max_np));
            ell.push(l);
        }
        let rep = tile(&c, &np, &ell, eta, cfg.cap)?;
        t.check(rep.ok(), || format!("fixture {done} seed {seed}: {rep:?}"));
        done += 1;
    }
    t.check(done == want, || format!("only {done} proper fixtures in {attempts} attempts"));
    Ok(json!({ "fixtures": done, "attempts": attempts }))
}

fn summands(cfg: &RunConfig, t: &mut Tally) -> R {
    let mut counts = BTreeMap::new();
    for (g, d) in [(FinAbGroup::power(4, 2), 2u32), (FinAbGroup::cyclic(8), 3)] {
        let subs = all_subgroups(&g, cfg.cap)?;
        for (gens, h) in &subs {
            let s = match direct_summand_below(&g, gens) {
                Ok(s) => s,
                Err(e) => {
                    t.fail(format!("{g}, H = {gens:?}: {e}"));
                    continue;
                }
            };
            let hs: BTreeSet<u64> = h.iter().copied().collect();
            let u = g.span(&s.u_gens);
            let v: BTreeSet<u64> = g.span(&s.v_gens).into_iter().collect();
            let inside = u.iter().all(|x| hs.contains(x));
            let meet = u.iter().filter(|x| v.contains(x)).count() == 1;
            let sums: BTreeSet<u64> = u.iter().flat_map(|&a| v.iter().map(move |&b| (a, b))).map(|(a, b)| g.add_idx(a, b)).collect();
            let big = (u.len() as u128) * (g.order() as u128).pow(d - 1) >= (h.len() as u128).pow(d);
            t.check(inside && meet && sums.len() as u64 == g.order() && big, || format!("{g}, H = {gens:?}: U = {:?}", s.u_gens));
        }
        counts.insert(g.to_string(), subs.len());
    }
    Ok(json!({ "subgroups": counts }))
}

/// All phases of degree at most 3 on `(Z/2^d)^n`, from every coefficient choice.
fn all_cubics(d: u32, n: usize) -> hfa_core::Result<Vec<PolyPhase>> {
    let mons = Monomial::all(n);
    let periods: Vec<i64> = mons.iter().map(|m| m.period(d)).collect();
    let total: i64 = periods.iter().product();
    (0..total)
        .map(|mut k| {
            let coeffs: Vec<(Monomial, i64)> = mons
                .iter()
                .zip(&periods)
                .map(|(&m, &p)| {
                    let c = k % p;
                    k /= p;
                    (m, c)
                })
                .collect();
            PolyPhase::new(d, n, coeffs, TorusValue::ZERO)
        })
        .collect()
}

fn integrates(g: &FinAbGroup, table: &[TorusValue], form: &MultilinearForm) -> bool {
    let els: Vec<GroupElement> = (0..g.order()).map(|i| g.element_at(i)).collect();
    let k = form.arity;
    let tuples = (g.order() as usize).pow(k as u32);
    (0..g.order()).all(|x| {
        (0..tuples).all(|mut tup| {
            let mut dirs = vec![0u64; k];
            for s in (0..k).rev() {
                dirs[s] = (tup % g.order() as usize) as u64;
                tup /= g.order() as usize;
            }
            let args: Vec<&GroupElement> = dirs.iter().map(|&a| &els[a as usize]).collect();
            delta_at(g, table, x, &dirs) == form.eval(&args)
        })
    })
}

fn integration(cfg: &RunConfig, t: &mut Tally) -> R {
    let seed = cfg.sub_seed("integration", 0);
    let mut rg = rng::stream(seed, "bilinear_fixtures", 0);
    let mut bilinear = 0u64;
    let mut check_bilinear = |t: &mut Tally, beta: MultilinearForm| -> hfa_core::Result<()> {
        let g = beta.group();
        match integrate_bilinear(&beta, cfg.cap, cfg.samples, seed)? {
            Integration::Integrated { q, .. } => {
                let ok = integrates(&g, &q.table(), &beta);
                t.check(ok, || format!("bilinear {beta:?} seed {seed}: derivative mismatch"));
            }
            Integration::Obstructed { criterion, .. } => t.fail(format!("bilinear {beta:?} seed {seed}: obstructed by {criterion}")),
        }
        bilinear += 1;
        Ok(())
    };
    for c in 0..4 {
        check_bilinear(t, MultilinearForm::new(2, 1, 2, vec![c])?)?;
    }
    let seeded = cfg.scale.pick(500, 40);
    for i in 0..seeded {
        let beta = if i % 2 == 0 {
            let (a, b, c) = (rg.gen_range(0..4), rg.gen_range(0..4), rg.gen_range(0..4));
            MultilinearForm::new(2, 2, 2, vec![a, b, b, c])?
        } else {
            MultilinearForm::new(3, 1, 2, vec![rg.gen_range(0..8)])?
        };
        check_bilinear(t, beta)?;
    }
    // trilinear on (Z/4)^1 against every cubic phase
    let g = FinAbGroup::power(4, 1);
    let tables: Vec<Vec<TorusValue>> = all_cubics(2, 1)?.iter().map(|q| q.table()).collect();
    let mut verdicts = BTreeMap::new();
    for c in 0..4u64 {
        let phi = MultilinearForm::new(2, 1, 3, vec![c])?;
        let oracle = tables.iter().any(|tb| integrates(&g, tb, &phi));
        let solver = integrate_trilinear(&phi, cfg.cap, cfg.samples, seed)?;
        let got = solver.poly().is_some();
        t.check(got == oracle, || format!("trilinear coefficient {c}: solver {got}, oracle {oracle}"));
        if let Some(q) = solver.poly() {
            t.check(integrates(&g, &q.table(), &phi), || format!("trilinear coefficient {c}: constructed q does not integrate"));
        }
        verdicts.insert(c.to_string(), got);
    }
    Ok(json!({ "bilinear_forms": bilinear, "cubic_oracle_size": tables.len(), "trilinear_integrable": verdicts }))
}

/// `phi(x) = sum k_i l(gamma_i x) mod K` with `l` the centred lift; Freiman-linear for `rho < 1/4`.
fn lift_map(b: &BohrSet, k: &FinAbGroup, coefs: &[i64], cap: u64) -> hfa_core::Result<PartialMap> {
    let g = &b.group;
    let n = g.order();
    PartialMap::from_fn(g, k, &b.members(cap)?, |x| {
        let acc: i64 = coefs.iter().zip(&b.freqs).map(|(c, f)| c * centered(f.0[0] * x % n, n)).sum();
        acc.rem_euclid(k.order() as i64) as u64
    })
}

fn extension(cfg: &RunConfig, t: &mut Tally) -> R {
    let fixtures = cfg.scale.pick(20, 6);
    let samples = cfg.scale.pick(1000, 200);
    let mut rows = Vec::new();
    for i in 0..fixtures {
        let seed = cfg.sub_seed("naive_extension", i);
        let mut rg = rng::stream(seed, "fixture", 0);
        let n = rg.gen_range(32u64..=256);
        let g = FinAbGroup::cyclic(n);
        let d = rg.gen_range(1..=2usize);
        let freqs: Vec<Character> = (0..d).map(|_| Character(vec![rg.gen_range(1..n)])).collect();
        let rho = Radius::new(1, rg.gen_range(5..=8));
        let b = BohrSet::constant(&g, freqs, rho)?;
        let k = FinAbGroup::cyclic(rg.gen_range(3..=11));
        let coefs: Vec<i64> = (0..d).map(|_| rg.gen_range(-3..=3)).collect();
        let mut m = rg.gen_range(2..=16usize);
        let phi = lift_map(&b, &k, &coefs, cfg.cap)?;
        t.check(freiman_check(&phi, cfg.cap)?.holds, || format!("fixture {i} seed {seed}: lift is not Freiman-linear"));
        // the drawn m may be too small for m B(rho') to close up; double until it does
        let ext = loop {
            match naive_extension(&phi, &b, m, cfg.cap) {
                Ok(ext) => break ext,
                Err(HfaError::Precondition(msg)) if msg.starts_with("closure fails") && m < 1024 => m *= 2,
                Err(e) => return Err(e),
            }
        };
        let a = audit_naive_extension(&ext, &g, samples, seed, cfg.cap)?;
        t.check(a.failures == 0, || format!("fixture {i} seed {seed}: {} defects outside <S>", a.failures));
        t.check(a.size_ok, || format!("fixture {i} seed {seed}: |S| = {} above {}", a.s_size, 2.0 * a.ell_bound));
        rows.push(json!({ "n": n, "d": d, "m": m, "s_size": a.s_size, "ell_bound": r6(a.ell_bound) }));
    }
    Ok(json!({ "fixtures": rows, "samples_each": samples }))
}

/// Bilinear `theta = a l1(x) l1(y) / p + kappa (l1(x) l2(y) - l2(x) l1(y))` on `B_{2 rho}`
/// with `f_1 = f_2 = e(-a l1^2 / 2p)`, `f_3 = e(a l1^2 / 2p)`, which cancel the symmetric part.
pub struct PlantedSymmetry {
    pub b: BohrSet,
    pub theta: EpsMultilinearForm,
    pub f12: Vec<Complex64>,
    pub f3: Vec<Complex64>,
}

pub fn planted_symmetry(p: u64, r: [u64; 2], a: i64, kappa: f64, cap: u64) -> hfa_core::Result<PlantedSymmetry> {
    let g = FinAbGroup::cyclic(p);
    let b0 = BohrSet::constant(&g, vec![Character(vec![r[0]]), Character(vec![r[1]])], Radius::new(1, 10))?;
    let (b, _) = regular_dilate(&b0, cap)?;
    let l1 = move |x: u64| centered(r[0] * x % p, p) as f64;
    let l2 = move |x: u64| centered(r[1] * x % p, p) as f64;
    let th = move |v: &[u64]| {
        let sym = (a as i128 * l1(v[0]) as i128 * l1(v[1]) as i128).rem_euclid(p as i128) as f64 / p as f64;
        sym + kappa * (l1(v[0]) * l2(v[1]) - l2(v[0]) * l1(v[1]))
    };
    let theta = EpsMultilinearForm::from_fn(&b.dilate(Radius::from_integer(2)), 2, th, cap, 0, 0)?;
    let inv2 = (p as i128 + 1) / 2;
    let quad = move |x: u64| (a as i128 * inv2 % p as i128 * (l1(x) as i128).pow(2)).rem_euclid(p as i128) as f64 / p as f64;
    let e = |t: f64| Complex64::from_polar(1.0, std::f64::consts::TAU * t);
    Ok(PlantedSymmetry {
        b,
        theta,
        f12: (0..p).map(|x| e(-quad(x))).collect(),
        f3: (0..p).map(|x| e(quad(x))).collect(),
    })
}

fn symmetry(cfg: &RunConfig, t: &mut Tally) -> R {
    let fixtures = cfg.scale.pick(10, 4);
    let mut rows = Vec::new();
    for i in 0..fixtures {
        let seed = cfg.sub_seed("symmetry", i);
        let mut rg = rng::stream(seed, "fixture", 0);
        let p = if i % 2 == 0 { 251 } else { 499 };
        let r = [rg.gen_range(1..p), rg.gen_range(1..p)];
        let a = rg.gen_range(1..p as i64);
        let kappa = rg.gen_range(-1e-5..1e-5);
        let fx = planted_symmetry(p, r, a, kappa, cfg.cap)?;
        let inp = |c: f64| SymmetryInput { b: &fx.b, theta: &fx.theta, f: [&fx.f12, &fx.f12, &fx.f3], c, shift_samples: 64, seed, cap: cfg.cap };
        let measured = match symmetry_defect(&inp(1e-3))? {
            SymmetryOutcome::NoWitness { measured_c, .. } => measured_c,
            SymmetryOutcome::Certified(rep) => rep.measured_c,
        };
        match symmetry_defect(&inp(measured * (1.0 - 1e-12)))? {
            SymmetryOutcome::Certified(rep) => {
                t.check(rep.holds, || format!("fixture {i} seed {seed}: quantity {} below {}", rep.quantity, rep.bound));
                rows.push(json!({
                    "p": p,
                    "c": r6(rep.c),
                    "b_size": rep.b_size,
                    "rho1": rep.rho1,
                    "b_rho1_size": rep.b_rho1_size,
                    "quantity": r6(rep.quantity),
                    "bound": r6(rep.bound),
                    "shift_target_met": rep.shift_value >= rep.shift_target,
                }));
            }
            SymmetryOutcome::NoWitness { reason, .. } => t.fail(format!("fixture {i} seed {seed}: hypothesis unmet ({reason})")),
        }
    }
    Ok(json!({ "fixtures": rows }))
}

/// Six-step walk counts from `u` by repeated adjacency-vector products.
fn walks_from(gr: &Graph, u: usize) -> Vec<u64> {
    let mut v = vec![0u64; gr.n];
    v[u] = 1;
    for _ in 0..6 {
        v = (0..gr.n).map(|w| (0..gr.n).filter(|&x| gr.has_edge(w, x)).map(|x| v[x]).sum()).collect();
    }
    v
}

fn robust(cfg: &RunConfig, t: &mut Tally) -> R {
    let graphs = cfg.scale.pick(10, 3);
    let mut rows = Vec::new();
    for i in 0..graphs {
        let seed = cfg.sub_seed("robust_subset", i);
        let mut rg = rng::stream(seed, "graph", 0);
        let n = rg.gen_range(60..=200usize);
        let p = rg.gen_range(0.45..0.8);
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|_| rg.gen_bool(p)).collect();
        let gr = Graph::new(n, &edges)?;
        let c = 0.2;
        if (gr.edge_count() as f64) < c * (n * n) as f64 {
            t.fail(format!("graph {i} seed {seed}: density below {c}"));
            continue;
        }
        let rs = robust_subset(&gr, c)?;
        t.check(rs.size_ok, || format!("graph {i} seed {seed}: |X| = {} below {}", rs.x.len(), rs.size_bound));
        t.check(rs.walks_ok, || format!("graph {i} seed {seed}: min walks {} below {}", rs.min_walks, rs.walk_bound));
        // recount a few rows of A^6 by vector iteration
        let w = walks6_matrix(&gr);
        for &u in rs.x.iter().step_by((rs.x.len() / 4).max(1)) {
            let direct = walks_from(&gr, u);
            t.check(direct == w[u], || format!("graph {i} seed {seed}: walk counts from {u} disagree"));
        }
        rows.push(json!({ "n": n, "edges": gr.edge_count(), "x": rs.x.len(), "min_walks": rs.min_walks, "walk_bound": r6(rs.walk_bound) }));
    }
    Ok(json!({ "graphs": rows }))
}
