//! Vector autoregression forecasting, directly and through the
//! segmentation pipeline.
//!
//! The pipeline route transforms the demeaned series into its estimated
//! latent coordinates, fits an independent VAR per recovered group, forecasts
//! each group, and maps the result back. When the segmentation is right this
//! fits far fewer parameters than one full VAR without losing structure.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{logdet_psd, lstsq_min_norm};
use crate::segmentation::{segment, SegmentConfig, SegmentationResult};
use crate::series::MultivariateSeries;
use crate::simgen::{build_model, wind_like_recipe};
use crate::stats::derive_seed;

/// A fitted vector autoregression
/// `y_t = c + sum_l Phi_l y_{t-l} + e_t`.
#[derive(Debug, Clone)]
pub struct VarModel {
    /// Selected lag order (0 means the fit is just the intercept).
    pub order: usize,
    /// Lag coefficient matrices `Phi_1 .. Phi_order`, each d-by-d, applied
    /// as `Phi_l · y_{t-l}`.
    pub coefficients: Vec<Array2<f64>>,
    /// Intercept vector `c`.
    pub intercept: Array1<f64>,
    /// Residual covariance of the selected fit.
    pub innovation_cov: Array2<f64>,
    /// Information criterion value of the selected order on the common
    /// comparison sample.
    pub aic: f64,
}

impl VarModel {
    pub fn dim(&self) -> usize {
        self.intercept.len()
    }
}

/// Builds the lagged regressor matrix and response for a VAR(k) fit using
/// targets `y_t` for `t` in `offset..T`. Regressor rows are
/// `[1, y_{t-1}, ..., y_{t-k}]`.
fn lagged_design(y: &Array2<f64>, k: usize, offset: usize) -> (Array2<f64>, Array2<f64>) {
    let (t_len, d) = y.dim();
    let rows = t_len - offset;
    let mut x = Array2::<f64>::ones((rows, 1 + d * k));
    for lag in 1..=k {
        let block = y.slice(s![offset - lag..t_len - lag, ..]);
        x.slice_mut(s![.., 1 + d * (lag - 1)..1 + d * lag]).assign(&block);
    }
    let resp = y.slice(s![offset.., ..]).to_owned();
    (x, resp)
}

fn residual_cov(x: &Array2<f64>, resp: &Array2<f64>, beta: &Array2<f64>) -> Array2<f64> {
    let resid = resp - &x.dot(beta);
    let rows = resid.nrows() as f64;
    let mut cov = resid.t().dot(&resid) / rows;
    // Symmetrize against floating-point drift; the matrix is symmetric in
    // exact arithmetic.
    let covt = cov.t().to_owned();
    cov += &covt;
    cov.mapv_inplace(|v| 0.5 * v);
    cov
}

/// Fits a VAR by least squares, selecting the lag order in
/// `0..=max_order` with an information criterion evaluated on the common
/// sample (targets from `max_order` on), then refitting the winner on its
/// full usable sample.
///
/// Requires `t_len > (max_order + 1) * dim + 1` so every candidate design
/// has more rows than columns.
pub fn fit_var(series: &MultivariateSeries, max_order: usize) -> Result<VarModel> {
    let d = series.dim();
    let t_len = series.t_len();
    if t_len <= (max_order + 1) * d + 1 {
        return Err(Error::invalid(format!(
            "need more than {} observations to consider VAR orders up to {max_order} in dimension {d}, got {t_len}",
            (max_order + 1) * d + 1
        )));
    }
    let y = series.values();
    let common_rows = (t_len - max_order) as f64;

    let mut best: Option<(f64, usize)> = None;
    for k in 0..=max_order {
        let (x, resp) = lagged_design(y, k, max_order);
        let beta = lstsq_min_norm(&x, &resp).ok_or(Error::SingularRegressor { order: k })?;
        let cov = residual_cov(&x, &resp, &beta);
        let aic = logdet_psd(&cov) + 2.0 * (d * (1 + d * k)) as f64 / common_rows;
        if best.is_none_or(|(b, _)| aic < b) {
            best = Some((aic, k));
        }
    }
    let (aic, order) = best.expect("at least order zero was scored");

    let (x, resp) = lagged_design(y, order, order);
    let beta = lstsq_min_norm(&x, &resp).ok_or(Error::SingularRegressor { order })?;
    let innovation_cov = residual_cov(&x, &resp, &beta);

    let intercept = beta.row(0).to_owned();
    let mut coefficients = Vec::with_capacity(order);
    for lag in 1..=order {
        // beta rows 1 + d(lag-1) + i hold the effect of coordinate i at this
        // lag on each response; transposed that is Phi_lag.
        let block = beta.slice(s![1 + d * (lag - 1)..1 + d * lag, ..]);
        coefficients.push(block.t().to_owned());
    }
    Ok(VarModel { order, coefficients, intercept, innovation_cov, aic })
}

/// Iterated multi-step forecast: each step feeds the previous prediction
/// back in as the newest observation. `history` must supply at least
/// `order` rows; its most recent row is the last one.
pub fn forecast_var(
    model: &VarModel,
    history: &MultivariateSeries,
    steps: usize,
) -> Result<Array2<f64>> {
    let d = model.dim();
    if history.dim() != d {
        return Err(Error::invalid(format!(
            "history has dimension {}, model expects {d}",
            history.dim()
        )));
    }
    if history.t_len() < model.order {
        return Err(Error::invalid(format!(
            "history of length {} cannot start a VAR({}) forecast",
            history.t_len(),
            model.order
        )));
    }
    let y = history.values();
    // recent[0] is y_{T-1}, recent[1] is y_{T-2}, ...
    let mut recent: VecDeque<Array1<f64>> = (0..model.order)
        .map(|i| y.row(y.nrows() - 1 - i).to_owned())
        .collect();
    let mut out = Array2::<f64>::zeros((steps, d));
    for step in 0..steps {
        let mut pred = model.intercept.clone();
        for (lag, phi) in model.coefficients.iter().enumerate() {
            pred += &phi.dot(&recent[lag]);
        }
        out.row_mut(step).assign(&pred);
        if model.order > 0 {
            recent.pop_back();
            recent.push_front(pred);
        }
    }
    Ok(out)
}

/// Forecasts through an explicit coordinate change: demean, rotate into
/// `transform` coordinates, fit and forecast one VAR per group of
/// coordinates, rotate back, re-add the mean. Groups must partition the
/// coordinate set. Returns the forecast and the per-group selected orders.
pub fn grouped_var_forecast(
    series: &MultivariateSeries,
    transform: &Array2<f64>,
    groups: &[Vec<usize>],
    steps: usize,
    max_order: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let p = series.dim();
    if transform.dim() != (p, p) {
        return Err(Error::invalid(format!(
            "transform must be {p}x{p}, got {:?}",
            transform.dim()
        )));
    }
    let mut seen = vec![false; p];
    for g in groups {
        for &j in g {
            if j >= p || seen[j] {
                return Err(Error::invalid(
                    "groups must partition the coordinates exactly once",
                ));
            }
            seen[j] = true;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::invalid("groups must cover every coordinate"));
    }

    let (centered, means) = series.demean_with_means();
    let y = centered.values().dot(transform);

    let mut y_future = Array2::<f64>::zeros((steps, p));
    let mut orders = Vec::with_capacity(groups.len());
    for g in groups {
        let mut sub = Array2::<f64>::zeros((y.nrows(), g.len()));
        for (c, &j) in g.iter().enumerate() {
            sub.column_mut(c).assign(&y.column(j));
        }
        let sub_series = MultivariateSeries::new(sub)?;
        let model = fit_var(&sub_series, max_order)?;
        let fc = forecast_var(&model, &sub_series, steps)?;
        for (c, &j) in g.iter().enumerate() {
            y_future.column_mut(j).assign(&fc.column(c));
        }
        orders.push(model.order);
    }

    let mut forecast = y_future.dot(&transform.t());
    forecast += &means.view().insert_axis(ndarray::Axis(0));
    Ok((forecast, orders))
}

/// Configuration for the segmentation-based forecaster.
#[derive(Debug, Clone)]
pub struct ForecastConfig {
    pub segment: SegmentConfig,
    /// Largest VAR order considered for every group.
    pub max_order: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { segment: SegmentConfig::default(), max_order: 10 }
    }
}

/// Result of a pipeline forecast: point forecasts in original coordinates
/// plus the segmentation structure that produced them.
#[derive(Debug, Clone)]
pub struct PipelineForecast {
    /// `steps`-by-`dim` forecasts, one row per horizon step.
    pub forecast: Array2<f64>,
    /// Recovered groups (indices into the latent coordinates).
    pub groups: Vec<Vec<usize>>,
    /// VAR order selected for each group, aligned with `groups`.
    pub per_group_orders: Vec<usize>,
    /// The full segmentation the forecast was built on.
    pub segmentation: SegmentationResult,
}

/// Segments the series, fits one VAR per recovered group in the latent
/// coordinates, and forecasts `steps` ahead in original coordinates.
pub fn forecast_pipeline(
    series: &MultivariateSeries,
    steps: usize,
    config: &ForecastConfig,
) -> Result<PipelineForecast> {
    let segmentation = segment(series, &config.segment)?;
    let (forecast, per_group_orders) = grouped_var_forecast(
        series,
        &segmentation.eigen.eigenvectors,
        &segmentation.groups,
        steps,
        config.max_order,
    )?;
    Ok(PipelineForecast {
        forecast,
        groups: segmentation.groups.clone(),
        per_group_orders,
        segmentation,
    })
}

/// Baseline: one unrestricted VAR on all coordinates jointly.
pub fn full_var_forecast(
    series: &MultivariateSeries,
    steps: usize,
    max_order: usize,
) -> Result<Array2<f64>> {
    let p = series.dim();
    let all: Vec<Vec<usize>> = vec![(0..p).collect()];
    let (forecast, _) =
        grouped_var_forecast(series, &Array2::eye(p), &all, steps, max_order)?;
    Ok(forecast)
}

/// Baseline: an independent scalar autoregression per coordinate.
pub fn univariate_ar_forecast(
    series: &MultivariateSeries,
    steps: usize,
    max_order: usize,
) -> Result<Array2<f64>> {
    let p = series.dim();
    let singles: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    let (forecast, _) =
        grouped_var_forecast(series, &Array2::eye(p), &singles, steps, max_order)?;
    Ok(forecast)
}

/// Per-step forecast accuracy over a collection of evaluation windows:
/// mean squared error per horizon step (averaged over windows and
/// coordinates) and the sample standard deviation across windows of the
/// per-window mean squared error.
pub fn evaluate_forecasts(
    actuals: &[Array2<f64>],
    forecasts: &[Array2<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if actuals.is_empty() || actuals.len() != forecasts.len() {
        return Err(Error::invalid(
            "need the same positive number of actual and forecast windows",
        ));
    }
    let shape = actuals[0].dim();
    if shape.0 == 0 {
        return Err(Error::invalid("windows must contain at least one step"));
    }
    for (a, f) in actuals.iter().zip(forecasts) {
        if a.dim() != shape || f.dim() != shape {
            return Err(Error::invalid("all windows must share one shape"));
        }
    }
    let (steps, d) = shape;
    let n = actuals.len();
    let mut mse = vec![0.0f64; steps];
    let mut sd = vec![0.0f64; steps];
    for s_idx in 0..steps {
        let per_window: Vec<f64> = (0..n)
            .map(|w| {
                (0..d)
                    .map(|j| {
                        let e = forecasts[w][[s_idx, j]] - actuals[w][[s_idx, j]];
                        e * e
                    })
                    .sum::<f64>()
                    / d as f64
            })
            .collect();
        let mean = per_window.iter().sum::<f64>() / n as f64;
        mse[s_idx] = mean;
        sd[s_idx] = if n > 1 {
            (per_window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
    }
    Ok((mse, sd))
}

/// Per-coordinate straight-line trend `a + b t` with `t` counted from zero
/// at the first observation.
#[derive(Debug, Clone)]
pub struct TrendModel {
    pub intercepts: Array1<f64>,
    pub slopes: Array1<f64>,
}

impl TrendModel {
    /// Trend value at (zero-based) time index `t`, which may lie beyond the
    /// fitted sample.
    pub fn value_at(&self, t: usize) -> Array1<f64> {
        &self.intercepts + &(&self.slopes * t as f64)
    }
}

/// Removes a least-squares straight line from every coordinate.
pub fn detrend_linear(series: &MultivariateSeries) -> (MultivariateSeries, TrendModel) {
    let y = series.values();
    let (t_len, d) = y.dim();
    let t_mean = (t_len as f64 - 1.0) / 2.0;
    let denom: f64 = (0..t_len).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let mut intercepts = Array1::<f64>::zeros(d);
    let mut slopes = Array1::<f64>::zeros(d);
    let mut resid = y.to_owned();
    for j in 0..d {
        let col_mean = y.column(j).mean().unwrap_or(0.0);
        let slope = if denom > 0.0 {
            (0..t_len)
                .map(|t| (t as f64 - t_mean) * (y[[t, j]] - col_mean))
                .sum::<f64>()
                / denom
        } else {
            0.0
        };
        let intercept = col_mean - slope * t_mean;
        intercepts[j] = intercept;
        slopes[j] = slope;
        for t in 0..t_len {
            resid[[t, j]] -= intercept + slope * t as f64;
        }
    }
    let detrended = MultivariateSeries::new(resid).expect("residuals of finite data are finite");
    (detrended, TrendModel { intercepts, slopes })
}

/// Forecast accuracy of one method in the demo comparison.
#[derive(Debug, Clone)]
pub struct MethodAccuracy {
    pub mse_per_step: Vec<f64>,
    pub sd_per_step: Vec<f64>,
}

/// Output of [`wind_demo`]: a rolling-origin comparison of the pipeline
/// forecaster against a full VAR and univariate autoregressions, plus the
/// final forecast from the complete series.
#[derive(Debug, Clone)]
pub struct WindDemoReport {
    pub t_len: usize,
    pub steps: usize,
    pub windows: usize,
    pub pipeline: MethodAccuracy,
    pub full_var: MethodAccuracy,
    pub univariate: MethodAccuracy,
    /// Final pipeline forecast from the full series, in data units
    /// (trend re-added).
    pub forecast: Array2<f64>,
    pub groups: Vec<Vec<usize>>,
    pub per_group_orders: Vec<usize>,
    pub segmentation: SegmentationResult,
}

/// Length of the demo series.
pub const WIND_DEMO_LEN: usize = 156;
const WIND_TRAIN_BASE: usize = 130;

/// Builds the demo dataset: a seven-coordinate series of length 156 made
/// from the wind-like recipe (two dependent pairs, three singles, random
/// orthogonal mixing) plus a per-coordinate linear trend.
pub fn wind_demo_series(seed: u64) -> Result<MultivariateSeries> {
    let recipe = wind_like_recipe();
    let (stationary, _) = build_model(&recipe, WIND_DEMO_LEN, derive_seed(seed, 1, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0));
    let p = stationary.dim();
    let mut data = stationary.into_values();
    for j in 0..p {
        let level: f64 = rng.random_range(4.0..12.0);
        let slope: f64 = rng.random_range(-0.015..0.015);
        for t in 0..WIND_DEMO_LEN {
            data[[t, j]] += level + slope * t as f64;
        }
    }
    MultivariateSeries::new(data)
}

/// Runs the built-in forecasting demonstration: generates the wind-like
/// series, scores pipeline / full-VAR / univariate forecasts over
/// expanding-origin windows (detrending each training window and
/// extrapolating the trend), and produces a final forecast from the whole
/// series.
pub fn wind_demo(seed: u64, steps: usize, config: &ForecastConfig) -> Result<WindDemoReport> {
    if steps == 0 {
        return Err(Error::invalid("demo needs at least one forecast step"));
    }
    let max_steps = WIND_DEMO_LEN - WIND_TRAIN_BASE - 4;
    if steps > max_steps {
        return Err(Error::invalid(format!(
            "demo supports at most {max_steps} forecast steps, got {steps}"
        )));
    }
    let data = wind_demo_series(seed)?;
    let values = data.values();
    let p = data.dim();
    let windows = WIND_DEMO_LEN - WIND_TRAIN_BASE - steps + 1;

    let mut actuals = Vec::with_capacity(windows);
    let mut fc_pipeline = Vec::with_capacity(windows);
    let mut fc_full = Vec::with_capacity(windows);
    let mut fc_uni = Vec::with_capacity(windows);
    for w in 0..windows {
        let train_len = WIND_TRAIN_BASE + w;
        let train =
            MultivariateSeries::new(values.slice(s![..train_len, ..]).to_owned())?;
        let actual = values.slice(s![train_len..train_len + steps, ..]).to_owned();

        let (detrended, trend) = detrend_linear(&train);
        let mut trend_future = Array2::<f64>::zeros((steps, p));
        for s_idx in 0..steps {
            trend_future.row_mut(s_idx).assign(&trend.value_at(train_len + s_idx));
        }

        let pipe = forecast_pipeline(&detrended, steps, config)?;
        fc_pipeline.push(&pipe.forecast + &trend_future);
        fc_full.push(full_var_forecast(&detrended, steps, config.max_order)? + &trend_future);
        fc_uni.push(
            univariate_ar_forecast(&detrended, steps, config.max_order)? + &trend_future,
        );
        actuals.push(actual);
    }

    let (pm, ps) = evaluate_forecasts(&actuals, &fc_pipeline)?;
    let (fm, fs) = evaluate_forecasts(&actuals, &fc_full)?;
    let (um, us) = evaluate_forecasts(&actuals, &fc_uni)?;

    let (detrended_full, trend_full) = detrend_linear(&data);
    let final_pipe = forecast_pipeline(&detrended_full, steps, config)?;
    let mut forecast = final_pipe.forecast.clone();
    for s_idx in 0..steps {
        let trend_row = trend_full.value_at(WIND_DEMO_LEN + s_idx);
        let mut row = forecast.row_mut(s_idx);
        row += &trend_row;
    }

    Ok(WindDemoReport {
        t_len: WIND_DEMO_LEN,
        steps,
        windows,
        pipeline: MethodAccuracy { mse_per_step: pm, sd_per_step: ps },
        full_var: MethodAccuracy { mse_per_step: fm, sd_per_step: fs },
        univariate: MethodAccuracy { mse_per_step: um, sd_per_step: us },
        forecast,
        groups: final_pipe.groups,
        per_group_orders: final_pipe.per_group_orders,
        segmentation: final_pipe.segmentation,
    })
}
