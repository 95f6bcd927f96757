//! Seeded tabular generators with a retail-sales column layout.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::schema::{ColumnRole, ColumnSpec, SchemaConfig, TargetTransform};
use super::table::{Column, RawTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Log-normal targets: multiplicative effects and noise on a log scale.
    HeavyTail,
    /// Additive effects with noise whose scale depends on the inputs.
    Heteroscedastic,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heavy-tail" => Ok(SynthKind::HeavyTail),
            "heteroscedastic" => Ok(SynthKind::Heteroscedastic),
            _ => Err(format!("unknown synthetic kind {s:?}")),
        }
    }
}

const STORES: usize = 120;
const STORE_TYPES: [&str; 4] = ["a", "b", "c", "d"];
const ASSORTMENTS: [&str; 3] = ["a", "b", "c"];
const STATE_HOLIDAYS: [&str; 4] = ["0", "a", "b", "c"];
const MISSING_DISTANCE: f64 = 0.03;

struct Store {
    kind: usize,
    assortment: usize,
    level: f64,
    promo_lift: f64,
    distance: Option<f64>,
    competition_age: f64,
}

fn stores(rng: &mut ChaCha8Rng) -> Vec<Store> {
    let level = Normal::new(0.0, 0.35).unwrap();
    (0..STORES)
        .map(|_| Store {
            kind: rng.random_range(0..STORE_TYPES.len()),
            assortment: rng.random_range(0..ASSORTMENTS.len()),
            level: level.sample(rng),
            promo_lift: rng.random_range(0.05..0.45),
            distance: (!rng.random_bool(MISSING_DISTANCE))
                .then(|| (rng.random_range(3.0..11.0f64)).exp().round()),
            competition_age: rng.random_range(0.0..120.0f64).round(),
        })
        .collect()
}

/// Column roles of generated tables.
pub fn synthetic_schema(kind: SynthKind) -> SchemaConfig {
    use ColumnRole::{Categorical, Continuous, Target, Timestamp};
    let cols = [
        ("Date", Timestamp),
        ("Store", Categorical),
        ("DayOfWeek", Categorical),
        ("Promo", Categorical),
        ("StateHoliday", Categorical),
        ("SchoolHoliday", Categorical),
        ("StoreType", Categorical),
        ("Assortment", Categorical),
        ("Day", Categorical),
        ("Month", Categorical),
        ("CompetitionDistance", Continuous),
        ("CompetitionOpenMonths", Continuous),
        ("Sales", Target),
    ];
    SchemaConfig {
        columns: cols.iter().map(|&(n, r)| ColumnSpec::new(n, r)).collect(),
        target_transform: match kind {
            SynthKind::HeavyTail => TargetTransform::Log,
            SynthKind::Heteroscedastic => TargetTransform::None,
        },
    }
}

/// Generates `n_rows` rows; identical for identical arguments.
pub fn gen_synthetic(kind: SynthKind, n_rows: usize, seed: u64) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stores = stores(&mut rng);
    let start = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
    let days = (NaiveDate::from_ymd_opt(2015, 7, 31).unwrap() - start).num_days();
    let noise = Normal::new(0.0, 1.0).unwrap();

    let names = [
        "Store",
        "DayOfWeek",
        "Promo",
        "StateHoliday",
        "SchoolHoliday",
        "StoreType",
        "Assortment",
        "Day",
        "Month",
    ];
    let mut cats: Vec<Column<String>> = names
        .iter()
        .map(|n| Column {
            name: n.to_string(),
            values: Vec::with_capacity(n_rows),
        })
        .collect();
    let mut distance = Vec::with_capacity(n_rows);
    let mut open_months = Vec::with_capacity(n_rows);
    let mut dates: Vec<NaiveDateTime> = Vec::with_capacity(n_rows);
    let mut sales = Vec::with_capacity(n_rows);

    for _ in 0..n_rows {
        let store_id = rng.random_range(0..STORES);
        let store = &stores[store_id];
        let date = start + Duration::days(rng.random_range(0..=days));
        let dow = chrono::Datelike::weekday(&date).number_from_monday() as usize;
        let day = chrono::Datelike::day(&date) as usize;
        let month = chrono::Datelike::month(&date) as usize;
        let promo = dow <= 5 && rng.random_bool(0.4);
        let state_holiday = if rng.random_bool(0.04) {
            *STATE_HOLIDAYS[1..].choose(&mut rng).unwrap()
        } else {
            "0"
        };
        let school_holiday = rng.random_bool(if (7..=8).contains(&month) { 0.6 } else { 0.12 });

        let months_open = store.competition_age
            + f64::from(chrono::Datelike::year(&date) - 2013) * 12.0
            + month as f64;
        let competition = store.distance.map_or(0.0, |d| {
            -0.25 * (-d / 1500.0).exp() * (months_open / 24.0).min(1.0)
        });
        let weekly = [0.0, 0.18, 0.05, 0.0, 0.02, 0.1, 0.22, -0.6][dow];
        let seasonal = 0.12 * ((month as f64 - 1.0) / 12.0 * std::f64::consts::TAU).cos()
            + if month == 12 { 0.25 } else { 0.0 }
            + if day <= 3 || day >= 29 { 0.06 } else { 0.0 };
        let holiday = match state_holiday {
            "0" => 0.0,
            "a" => -0.35,
            "b" => -0.5,
            _ => -0.2,
        } + if school_holiday { 0.05 } else { 0.0 };
        let kind_shift = [0.0, 0.35, -0.05, 0.08][store.kind] + [0.0, 0.1, 0.2][store.assortment];
        let promo_effect = if promo {
            store.promo_lift * (1.0 + 0.5 * f64::from(dow == 1))
        } else {
            0.0
        };
        let signal =
            store.level + kind_shift + weekly + seasonal + holiday + competition + promo_effect;

        let y = match kind {
            SynthKind::HeavyTail => {
                let sigma = 0.25 + 0.1 * f64::from(store.kind == 1);
                (8.6 + signal + sigma * noise.sample(&mut rng))
                    .exp()
                    .round()
                    .max(1.0)
            }
            SynthKind::Heteroscedastic => {
                let sigma = 0.2 + 0.6 * (signal + 1.0).clamp(0.0, 2.0);
                5000.0 * (1.0 + signal) + 1000.0 * sigma * noise.sample(&mut rng)
            }
        };

        let values = [
            (store_id + 1).to_string(),
            dow.to_string(),
            u8::from(promo).to_string(),
            state_holiday.to_string(),
            u8::from(school_holiday).to_string(),
            STORE_TYPES[store.kind].to_string(),
            ASSORTMENTS[store.assortment].to_string(),
            day.to_string(),
            month.to_string(),
        ];
        for (col, v) in cats.iter_mut().zip(values) {
            col.values.push(v);
        }
        distance.push(store.distance);
        open_months.push(Some(months_open));
        dates.push(date.and_hms_opt(0, 0, 0).unwrap());
        sales.push(y);
    }

    RawTable {
        categorical: cats,
        continuous: vec![
            Column {
                name: "CompetitionDistance".into(),
                values: distance,
            },
            Column {
                name: "CompetitionOpenMonths".into(),
                values: open_months,
            },
        ],
        timestamp: Some(Column {
            name: "Date".into(),
            values: dates,
        }),
        target: Column {
            name: "Sales".into(),
            values: sales,
        },
    }
}

/// Sample excess kurtosis (population moments).
pub fn excess_kurtosis(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}
