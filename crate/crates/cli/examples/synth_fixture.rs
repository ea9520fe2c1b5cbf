//! Writes the bundled synthetic fixture: a SEIR+HD epidemic with a
//! shelter-in-place on day 20, observed through a 5% multiplicative noise
//! on reported cases.
//!
//! cargo run -p mdl-epi --example synth_fixture -- fixtures/synthetic

use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use mdl_epi::EpiModel;

const START: &str = "2020-03-01";
const DAYS: usize = 90;
const INTERVENTION_DAY: usize = 20;
const NOISE: f64 = 0.05;
const SEED: u64 = 2020;

const CONFIG: &str = r#"# Synthetic SEIR+HD epidemic, see crates/cli/examples/synth_fixture.rs.
model = "seir_hd"
seed = 7
output_dir = "out"

[data]
cases = "cases.csv"
region = "SYN"
serology = "serology.csv"
survey = "survey.csv"
truth = "truth.csv"

[period]
observed_end = "2020-04-29"

[model_params]
population = 1000000
intervention_date = "2020-03-21"

[calibration]
restarts = 2
max_iters = 300

[refine]
max_evals = 100
recalib_iters = 20

[scenario]
multiplier = 0.5
"#;

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/synthetic".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let start: NaiveDate = START.parse().unwrap();
    let date = |t: usize| start + Days::new(t as u64);

    let model = EpiModel::seir_hd(1e6).with_intervention_day(Some(INTERVENTION_DAY));
    let theta = model
        .parametrization(&[("beta0", 0.8), ("sigma", 0.62), ("e0", 20.0), ("alpha", 0.4), ("alpha1", 0.08)])
        .unwrap();
    let out = model.simulate(&theta, DAYS).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let noise = Normal::new(1.0, NOISE).unwrap();

    let mut cases = String::from("date,region,cases,deaths\n");
    let mut cumulative = 0.0;
    for (t, r) in out.daily_reported.iter().enumerate() {
        cumulative += (r * noise.sample(&mut rng)).max(0.0);
        writeln!(cases, "{},SYN,{},0", date(t), cumulative.round()).unwrap();
    }

    let mut truth = String::from("date,total\n");
    for (t, v) in out.daily_total.iter().enumerate() {
        writeln!(truth, "{},{v:.6}", date(t)).unwrap();
    }

    let total = out.cumulative_total();
    let mut serology = String::from("collection_start,collection_end,point,ci_low,ci_high\n");
    for t in [40usize, 55, 70] {
        let v = total[t - 7];
        writeln!(
            serology,
            "{},{},{:.0},{:.0},{:.0}",
            date(t),
            date(t + 5),
            v,
            v * 0.8,
            v * 1.2
        )
        .unwrap();
    }

    let symptomatic = out.symptomatic_count.as_ref().unwrap();
    let mut survey = String::from("date,rate,stderr\n");
    for t in 14..DAYS {
        let rate = symptomatic[t] / out.population * noise.sample(&mut rng);
        writeln!(survey, "{},{rate:.8},{:.8}", date(t), rate * NOISE).unwrap();
    }

    for (name, text) in [
        ("config.toml", CONFIG.to_string()),
        ("cases.csv", cases),
        ("truth.csv", truth),
        ("serology.csv", serology),
        ("survey.csv", survey),
    ] {
        std::fs::write(dir.join(name), text).unwrap();
    }
    println!("fixture written to {}", dir.display());
}
