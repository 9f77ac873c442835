use std::io::Write;

use crate::io::{fmt_f64, write_row};

pub const METRICS_HEADER: &str = "filter,sim,t,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub filter: String,
    pub sim: usize,
    pub t: usize,
    pub metric: String,
    pub value: f64,
}

/// Long-format metric table, one row per (filter, sim, t, metric).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub rows: Vec<MetricRow>,
}

impl MetricsRecord {
    pub fn push(&mut self, filter: &str, sim: usize, t: usize, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            filter: filter.to_string(),
            sim,
            t,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn extend(&mut self, other: MetricsRecord) {
        self.rows.extend(other.rows);
    }

    /// Values of `metric` for `filter`, indexed `[sim][t - 1]`, in row order.
    pub fn series(&self, filter: &str, metric: &str) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.filter == filter && r.metric == metric)
            .map(|r| (r.sim, r.t, r.value))
            .collect()
    }

    /// Mean of `metric` over simulations at each `t`, for `t = 1..=steps`.
    pub fn mean_over_sims(&self, filter: &str, metric: &str, steps: usize) -> Vec<f64> {
        let mut sum = vec![0.0; steps];
        let mut count = vec![0usize; steps];
        for (_, t, v) in self.series(filter, metric) {
            if (1..=steps).contains(&t) {
                sum[t - 1] += v;
                count[t - 1] += 1;
            }
        }
        sum.iter()
            .zip(count)
            .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect()
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{METRICS_HEADER}")?;
        for r in &self.rows {
            write_row(
                out,
                &[r.filter.clone(), r.sim.to_string(), r.t.to_string(), r.metric.clone(), fmt_f64(r.value)],
            )?;
        }
        Ok(())
    }
}
