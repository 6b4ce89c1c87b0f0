use super::{Axis, Check, DiffKind, ExperimentSpec, ModelSpec, Nuisance, Oracle, Quantity, Reference};
use crate::error::{Error, Result};
use crate::mc::McConfig;
use crate::models::{CevParams, CommodityParams, HestonParams, SzParams};

const DEFAULT_SEED: u64 = 42;

fn table_heston() -> HestonParams {
    HestonParams { kappa: 0.1465, theta: 0.5172, omega: 0.5786, rho: -0.0243, r: 0.0 }
}

fn table_cev(gamma: f64) -> CevParams {
    let p = table_heston();
    CevParams { kappa: p.kappa, theta: p.theta, omega: p.omega, rho: p.rho, r: p.r, gamma }
}

fn figure_heston() -> HestonParams {
    HestonParams { kappa: 2.0, theta: 0.04, omega: 0.1, rho: -0.5, r: 0.1 }
}

fn sz(rho: f64) -> SzParams {
    SzParams { kappa: 4.0, theta: 0.2, omega: 0.1, rho, r: 0.0953 }
}

fn commodity() -> CommodityParams {
    CommodityParams { eta: 1.0, alpha: 85f64.ln(), kappa: 1.0, theta: 0.05, omega: 0.2, rho: -0.5 }
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn table_spots() -> Vec<f64> {
    range(950.0, 1050.0, 10.0)
}

fn table_variances() -> Vec<f64> {
    (1..=11).map(|i| i as f64 / 10.0).collect()
}

fn base(id: &str, description: &str, model: ModelSpec, quantity: Quantity) -> ExperimentSpec {
    ExperimentSpec {
        id: id.into(),
        description: description.into(),
        model,
        quantity,
        strike: 100.0,
        spot: 100.0,
        level: 0.04,
        axis: Axis::Spot,
        grid: Vec::new(),
        maturities: Vec::new(),
        orders: (0..=4).collect(),
        nuisance: Nuisance::Spot,
        reference: Reference::Fourier,
        oracle: None,
        scale: 1.0,
        diff: DiffKind::Percent,
        seed: DEFAULT_SEED,
        out: None,
        checks: Vec::new(),
        notes: Vec::new(),
    }
}

/// Short-dated at-the-money table setup, sweeping spot or variance.
fn heston_table(id: &str, description: &str, quantity: Quantity, panel_b: bool) -> ExperimentSpec {
    let mut s = base(id, description, ModelSpec::Heston(table_heston()), quantity);
    s.strike = 1000.0;
    s.spot = 1000.0;
    s.level = table_heston().theta;
    s.maturities = vec![1.0 / 12.0];
    if panel_b {
        s.axis = Axis::Level;
        s.grid = table_variances();
    } else {
        s.grid = table_spots();
    }
    s.notes.push("printed N=5 columns correspond to order 4 (five correction terms)".into());
    s
}

fn heston_price_tables() -> Vec<ExperimentSpec> {
    let mut a = heston_table("table-hest-A", "Heston call prices across spot", Quantity::Call, false);
    a.checks = vec![
        Check::ReferenceMatches {
            printed: vec![
                57.8425, 62.3711, 67.1005, 72.0291, 77.1553, 82.4766, 87.9903, 93.6933, 99.5822, 105.6532, 111.9021,
            ],
            tol: 0.001,
        },
        Check::KmMatches {
            order: 4,
            printed: vec![
                57.8449, 62.3738, 67.1033, 72.0321, 77.1584, 82.4797, 87.9934, 93.6964, 99.5852, 105.656, 111.9048,
            ],
            tol: 0.002,
        },
        Check::DiffMatches {
            order: 4,
            printed: vec![
                0.00418, 0.0042574, 0.0042447, 0.0041553, 0.0040021, 0.003797, 0.0035513, 0.003275, 0.0029773,
                0.0026663, 0.0023492,
            ],
            tol: 0.002,
        },
    ];
    let mut b =
        heston_table("table-hest-B", "Heston at-the-money call prices across spot variance", Quantity::Call, true);
    b.checks = vec![
        Check::ReferenceMatches {
            printed: vec![
                36.4488, 51.4125, 62.8997, 72.5792, 81.1007, 88.7981, 95.8702, 102.4465, 108.6171, 114.4477, 119.9878,
            ],
            tol: 0.001,
        },
        Check::KmMatches {
            order: 4,
            printed: vec![
                36.4854, 51.4255, 62.9068, 72.5838, 81.104, 88.8006, 95.8721, 102.4481, 108.6184, 114.4488, 119.9888,
            ],
            tol: 0.002,
        },
        Check::DiffMatches {
            order: 4,
            printed: vec![
                0.10045, 0.025319, 0.011276, 0.0063472, 0.0040628, 0.002821, 0.002072, 0.0015857, 0.0012524, 0.001014,
                0.00083766,
            ],
            tol: 0.002,
        },
    ];
    vec![a, b]
}

struct GreekTable {
    ft: [f64; 11],
    km: [f64; 11],
    diff: [f64; 11],
}

fn heston_greek_tables() -> Vec<ExperimentSpec> {
    let delta_a = GreekTable {
        ft: [44.2794, 46.2918, 48.2928, 50.2776, 52.2414, 54.18, 56.0893, 57.9657, 59.8058, 61.6066, 63.3654],
        km: [44.2819, 46.294, 48.2945, 50.2788, 52.2421, 54.1801, 56.089, 57.9649, 59.8046, 61.6049, 63.3633],
        diff: [0.0; 11],
    };
    let delta_b = GreekTable {
        ft: [51.9512, 52.6614, 53.2189, 53.6929, 54.1121, 54.492, 54.8416, 55.1673, 55.4732, 55.7625, 56.0376],
        km: [51.9516, 52.6509, 53.2149, 53.6917, 54.1121, 54.4932, 54.8419, 55.1588, 55.4419, 55.69, 55.9066],
        diff: [
            -0.00044321,
            0.010469,
            0.0040575,
            0.0012105,
            0.0000348,
            -0.0012002,
            -0.00021102,
            0.0085098,
            0.031343,
            0.072555,
            0.13101,
        ],
    };
    let gamma_a = GreekTable {
        ft: [0.20165, 0.20076, 0.19937, 0.1975, 0.19519, 0.19246, 0.18935, 0.18588, 0.18209, 0.17802, 0.1737],
        km: [0.20161, 0.20071, 0.19932, 0.19745, 0.19514, 0.19241, 0.1893, 0.18583, 0.18205, 0.17798, 0.17366],
        diff: [0.0; 11],
    };
    let gamma_b = GreekTable {
        ft: [0.44642, 0.31234, 0.25395, 0.21935, 0.1958, 0.17844, 0.16496, 0.15409, 0.14509, 0.13748, 0.13092],
        km: [0.38533, 0.30392, 0.25273, 0.21918, 0.19575, 0.17843, 0.1652, 0.15448, 0.1436, 0.1273, 0.096136],
        diff: [
            0.061096,
            0.0084156,
            0.0012173,
            0.0001669,
            5.1236e-05,
            1.3833e-05,
            -0.00023702,
            -0.00038083,
            0.0014905,
            0.010179,
            0.034784,
        ],
    };
    let vega_a = GreekTable {
        ft: [74.9687, 76.221, 77.2834, 78.1538, 78.8316, 79.3178, 79.6148, 79.7259, 79.6561, 79.4111, 78.9977],
        km: [74.9679, 76.2212, 77.2847, 78.1563, 78.8354, 79.3229, 79.6212, 79.7336, 79.6651, 79.4213, 79.0090],
        diff: [0.0; 11],
    };
    let vega_b = GreekTable {
        ft: [180.4329, 127.7884, 104.3134, 90.279, 80.6826, 73.5874, 68.0654, 63.6084, 59.9122, 56.7816, 54.0853],
        km: [151.6085, 122.9584, 103.4803, 90.1519, 80.6861, 73.5304, 67.8674, 63.6146, 61.4241, 62.6834, 69.5145],
        diff: [28.8244, 4.8299, 0.83308, 0.12705, -0.0035699, 0.056988, 0.19792, -0.0061472, -1.512, -5.9018, -15.4293],
    };
    let specs = [
        ("table-hest-delta-A", "Heston delta across spot, percent", Quantity::Delta, false, delta_a, 0.005, 100.0),
        (
            "table-hest-delta-B",
            "Heston delta across spot variance, percent",
            Quantity::Delta,
            true,
            delta_b,
            0.005,
            100.0,
        ),
        ("table-hest-gamma-A", "Heston gamma across spot, percent", Quantity::Gamma, false, gamma_a, 0.0005, 100.0),
        (
            "table-hest-gamma-B",
            "Heston gamma across spot variance, percent",
            Quantity::Gamma,
            true,
            gamma_b,
            0.0005,
            100.0,
        ),
        (
            "table-hest-vega-A",
            "Heston sensitivity to spot variance across spot",
            Quantity::Vega,
            false,
            vega_a,
            0.01,
            1.0,
        ),
        (
            "table-hest-vega-B",
            "Heston sensitivity to spot variance across spot variance",
            Quantity::Vega,
            true,
            vega_b,
            0.01,
            1.0,
        ),
    ];
    specs
        .into_iter()
        .map(|(id, description, q, panel_b, t, tol, scale)| {
            let mut s = heston_table(id, description, q, panel_b);
            s.scale = scale;
            s.diff = DiffKind::Absolute;
            s.checks = vec![Check::ReferenceMatches { printed: t.ft.to_vec(), tol }];
            if panel_b {
                s.nuisance = Nuisance::Fixed(table_heston().theta.sqrt());
                s.notes.push("nuisance fixed at the long-run volatility while the spot variance varies".into());
                s.checks.push(Check::UnstableDiff {
                    order: 4,
                    printed_km: t.km.to_vec(),
                    printed_diff: t.diff.to_vec(),
                    tol,
                });
            } else {
                s.checks.push(Check::KmMatches { order: 4, printed: t.km.to_vec(), tol });
            }
            s
        })
        .collect()
}

fn heston_figures() -> Vec<ExperimentSpec> {
    let mut conv = base(
        "fig-heston-convergence",
        "Heston call error by order across moneyness, one year",
        ModelSpec::Heston(figure_heston()),
        Quantity::Call,
    );
    conv.grid = range(80.0, 120.0, 1.0);
    conv.maturities = vec![1.0];
    conv.orders = (0..=5).collect();
    conv.checks = vec![
        Check::MaxAbsDiffNonIncreasing { orders: (0..=4).collect(), tau: 1.0 },
        Check::MaxAbsDiffAtMost { order: 4, tau: 1.0, bound: 0.5 },
    ];

    let mut long = conv.clone();
    long.id = "fig-heston-maturity".into();
    long.description = "Heston call error by order for long maturities".into();
    long.maturities = vec![1.5, 2.0, 4.0];
    long.checks = vec![Check::AllRowsSolved];

    let mut put = conv.clone();
    put.id = "fig-heston-put".into();
    put.description = "Heston put error by order, put baseline with the call corrections".into();
    put.quantity = Quantity::Put;
    put.maturities = vec![1.0, 2.0, 0.25];
    put.checks = vec![Check::AllRowsSolved];
    vec![conv, long, put]
}

const CEV_NOTE: &str = "Monte Carlo: Milstein, reflective variance, 500 steps, 20000 paths";

fn cev_tables() -> Vec<ExperimentSpec> {
    let km_06_a = [57.8674, 62.3967, 67.1266, 72.0555, 77.1817, 82.5029, 88.0163, 93.7188, 99.6069, 105.677, 111.9249];
    let km_06_b = [36.6167, 51.5021, 62.9573, 72.6188, 81.1286, 88.8177, 95.8836, 102.455, 108.6217, 114.449, 119.9864];
    let km_133_a =
        [57.9685, 62.4995, 67.2303, 72.1595, 77.2853, 82.6053, 88.1168, 93.8168, 99.7018, 105.7682, 112.0119];
    let km_133_b =
        [36.8541, 51.6922, 63.1147, 72.7493, 81.235, 88.9015, 95.9457, 102.4961, 108.642, 114.4488, 119.9658];
    let mk = |id: &str, gamma: f64, panel_b: bool, km: [f64; 11]| {
        let what = if panel_b { "spot variance" } else { "spot" };
        let mut s =
            heston_table(id, &format!("CEV call prices, gamma {gamma}, across {what}"), Quantity::Call, panel_b);
        s.model = ModelSpec::Cev(table_cev(gamma));
        s.reference = Reference::MonteCarlo(McConfig::option_default(DEFAULT_SEED));
        s.notes.push(CEV_NOTE.into());
        s.checks = vec![
            Check::KmMatches { order: 4, printed: km.to_vec(), tol: 0.01 },
            Check::IntervalContainsKm { order: 4 },
        ];
        if !panel_b {
            s.checks.push(Check::MaxAbsDiffAtMost { order: 4, tau: 1.0 / 12.0, bound: 1.2 });
        }
        s
    };
    let mut cross = heston_table(
        "cev-gamma05-crosscheck",
        "CEV simulation at gamma 0.5 against the square-root transform price",
        Quantity::Call,
        false,
    );
    cross.model = ModelSpec::Cev(table_cev(0.5));
    cross.reference = Reference::MonteCarlo(McConfig::option_default(DEFAULT_SEED));
    cross.oracle = Some(Oracle::HestonFourier);
    cross.notes.push(CEV_NOTE.into());
    cross.checks = vec![Check::IntervalContainsOracle];
    vec![
        mk("table-cev-gamma06", 0.6, false, km_06_a),
        mk("table-cev-gamma06-B", 0.6, true, km_06_b),
        mk("table-cev-gamma133", 1.33, false, km_133_a),
        mk("table-cev-gamma133-B", 1.33, true, km_133_b),
        cross,
    ]
}

const SZ_OMEGA_NOTE: &str =
    "printed transform greek columns are reproduced with omega 0.2; this run uses the stated 0.1";

fn sz_figures() -> Vec<ExperimentSpec> {
    let mk = |id: &str, description: &str, rho: f64| {
        let mut s = base(id, description, ModelSpec::Sz(sz(rho)), Quantity::Call);
        s.level = 0.2;
        s.grid = range(80.0, 120.0, 1.0);
        s.maturities = vec![0.25, 0.5, 1.0];
        s.orders = (0..=5).collect();
        s
    };
    let mut ss = mk("fig-ss-convergence", "uncorrelated OU volatility: call error by order across moneyness", 0.0);
    ss.checks = vec![
        Check::MaxAbsDiffAtMost { order: 4, tau: 0.25, bound: 0.7 },
        Check::MaxAbsDiffAtMost { order: 5, tau: 0.25, bound: 1.2 },
        Check::MaxAbsDiffExceeds { order: 5, other: 0, tau: 1.0 },
    ];
    let mut szc = mk("fig-sz-convergence", "correlated OU volatility: call error by order across moneyness", -0.5);
    szc.checks = vec![Check::AllRowsSolved];
    vec![ss, szc]
}

fn sz_greek_tables() -> Vec<ExperimentSpec> {
    let spots = range(80.0, 120.0, 5.0);
    let vols = table_variances();
    let mk = |id: &str, description: &str, q: Quantity, panel_b: bool| {
        let mut s = base(id, description, ModelSpec::Sz(sz(-0.5)), q);
        s.level = 0.2;
        s.maturities = vec![0.25];
        s.orders = (0..=5).collect();
        s.diff = DiffKind::Absolute;
        s.scale = if q == Quantity::Vega { 1.0 } else { 100.0 };
        if panel_b {
            s.axis = Axis::Level;
            s.grid = vols.clone();
        } else {
            s.grid = spots.clone();
        }
        s.notes.push(SZ_OMEGA_NOTE.into());
        s
    };
    // Bounds are the printed maximum |FT - KM| rounded up.
    let mut delta = mk("table-sz-delta", "OU volatility delta across spot, percent", Quantity::Delta, false);
    delta.checks = vec![Check::MaxAbsDiffAtMost { order: 5, tau: 0.25, bound: 2.5 }];
    let mut delta_b = mk("table-sz-delta-B", "OU volatility delta across spot vol, percent", Quantity::Delta, true);
    delta_b.checks = vec![Check::MaxAbsDiffAtMost { order: 5, tau: 0.25, bound: 2.0 }];
    let mut gamma = mk("table-sz-gamma", "OU volatility gamma across spot, percent", Quantity::Gamma, false);
    gamma.checks = vec![Check::MaxAbsDiffAtMost { order: 5, tau: 0.25, bound: 0.5 }];
    let mut gamma_b = mk("table-sz-gamma-B", "OU volatility gamma across spot vol", Quantity::Gamma, true);
    gamma_b.scale = 1.0;
    gamma_b.notes.push("the printed spot-vol panel for gamma is a plain number, not percent".into());
    gamma_b.checks = vec![Check::MaxAbsDiffAtMost { order: 5, tau: 0.25, bound: 0.15 }];
    let mut vega = mk("table-sz-vega", "OU volatility sensitivity to spot vol across spot", Quantity::Vega, false);
    vega.checks = vec![Check::MaxAbsDiffAtMost { order: 5, tau: 0.25, bound: 1.5 }];
    let mut vega_b = mk(
        "table-sz-vega-B",
        "OU volatility sensitivity to spot vol across spot vol, baseline vol held at 0.2",
        Quantity::Vega,
        true,
    );
    vega_b.nuisance = Nuisance::Fixed(0.2);
    vega_b.checks = vec![Check::UnstableGrowth { order: 5, from: 0.4, min_magnitude: 100.0 }];
    vec![delta, delta_b, gamma, gamma_b, vega, vega_b]
}

fn futures() -> Vec<ExperimentSpec> {
    let mk = |id: &str, tau: f64, label: &str| {
        let mut s = base(
            id,
            &format!("commodity futures, maturity {label}"),
            ModelSpec::Commodity(commodity()),
            Quantity::Futures,
        );
        s.spot = 80.0;
        s.level = 0.04;
        s.strike = f64::NAN;
        s.grid = vec![80.0];
        s.maturities = vec![tau];
        s.reference = Reference::MonteCarlo(McConfig::futures_default(DEFAULT_SEED));
        s.notes.push("Monte Carlo: Milstein, reflective variance, 1000 steps, 200000 paths".into());
        s
    };
    let mut t05 = mk("fig-futures-T05", 0.5, "six months");
    t05.checks = vec![
        Check::ReferenceWithin { lo: 81.70, hi: 81.92 },
        Check::DiffNear { order: 0, tau: 0.5, target: 0.2387, tol: 0.15 },
        Check::DiffNear { order: 1, tau: 0.5, target: 0.4131, tol: 0.15 },
    ];
    let mut t025 = mk("fig-futures-T025", 0.25, "three months (figure caption)");
    t025.notes.push("the text describes this run as one month; see fig-futures-T1M".into());
    t025.checks = vec![Check::AllRowsSolved];
    let mut t1m = mk("fig-futures-T1M", 1.0 / 12.0, "one month (text)");
    t1m.notes.push("the figure caption gives 0.25; see fig-futures-T025".into());
    t1m.checks = vec![Check::AllRowsSolved];
    let mut t10 = mk("fig-futures-T10", 1.0, "one year");
    t10.checks = vec![Check::MaxAbsDiffExceeds { order: 4, other: 0, tau: 1.0 }];
    let mut reduced = mk("fig-futures-T05-reduced", 0.5, "six months, 50000 paths");
    reduced.reference = Reference::MonteCarlo(McConfig::futures_reduced(DEFAULT_SEED));
    reduced.notes = vec!["Monte Carlo: Milstein, reflective variance, 1000 steps, 50000 paths".into()];
    reduced.checks = vec![Check::AllRowsSolved];
    vec![t05, t025, t1m, t10, reduced]
}

/// Model names accepted by [`point_spec`].
pub const MODELS: [&str; 4] = ["heston", "cev", "sz", "commodity"];

/// Single-point spec with the figure parameters of a model: at the money
/// with strike 100, one year for the square-root models, three months for
/// OU volatility and six months for futures (spot 80).
pub fn point_spec(model: &str, quantity: Quantity) -> Result<ExperimentSpec> {
    let h = figure_heston();
    let (m, level, tau) = match model {
        "heston" => (ModelSpec::Heston(h), h.theta, 1.0),
        "cev" => (
            ModelSpec::Cev(CevParams {
                kappa: h.kappa,
                theta: h.theta,
                omega: h.omega,
                rho: h.rho,
                r: h.r,
                gamma: 0.5,
            }),
            h.theta,
            1.0,
        ),
        "sz" => (ModelSpec::Sz(sz(-0.5)), 0.2, 0.25),
        "commodity" => (ModelSpec::Commodity(commodity()), 0.04, 0.5),
        _ => return Err(Error::Invalid(format!("unknown model `{model}`; known: {}", MODELS.join(", ")))),
    };
    let mut s = base(&format!("point-{model}"), &format!("{model} {quantity} at one point"), m, quantity);
    s.level = level;
    s.maturities = vec![tau];
    if model == "commodity" {
        s.spot = 80.0;
        s.strike = f64::NAN;
        s.reference = Reference::MonteCarlo(McConfig::futures_reduced(DEFAULT_SEED));
    }
    s.grid = vec![s.spot];
    Ok(s)
}

/// Every registered experiment.
pub fn registry() -> Vec<ExperimentSpec> {
    let mut all = heston_price_tables();
    all.extend(heston_greek_tables());
    all.extend(heston_figures());
    all.extend(cev_tables());
    all.extend(sz_figures());
    all.extend(sz_greek_tables());
    all.extend(futures());
    all
}

pub fn ids() -> Vec<String> {
    registry().into_iter().map(|s| s.id).collect()
}

pub fn lookup(id: &str) -> Result<ExperimentSpec> {
    registry()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::Invalid(format!("unknown experiment `{id}`; known: {}", ids().join(", "))))
}
