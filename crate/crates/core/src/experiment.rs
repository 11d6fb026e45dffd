//! Cross-validation and ablation drivers.
//!
//! Folds (and ablation cells) are independent: each owns its parameters,
//! optimizer state and random streams, so results do not depend on how many
//! worker threads run them.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::{EegDataset, FoldPlan};
use crate::error::{invalid, Result};
use crate::metrics::{confusion, report, summarize_cv, CvSummary, MetricsReport};
use crate::model::{ModelConfig, ModelParams, Variant};
use crate::optim::{evaluate, train, Evaluation, TrainConfig, TrainLog};

/// Run `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every item ran")).collect()
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub params: ModelParams<f32>,
    pub log: TrainLog,
    pub test: Evaluation,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub folds: Vec<FoldOutcome>,
    pub summary: CvSummary,
}

/// Train and test one fold. Parameters are initialized from the run seed.
pub fn run_fold(data: &EegDataset, model: &ModelConfig, run: &TrainConfig, plan: &FoldPlan, fold: usize) -> Result<FoldOutcome> {
    let f = plan.folds.get(fold).ok_or_else(|| invalid(format!("fold {fold} out of range")))?;
    let init = ModelParams::init(model, run.seed)?;
    let (params, log) = train(init, data, &f.train, &f.val, run)?;
    let test = evaluate(&params, data, &f.test)?;
    let metrics = report(&confusion(&test.labels, &test.predictions, model.n_classes)?)?;
    Ok(FoldOutcome { params, log, test, metrics })
}

fn summarize(folds: Vec<FoldOutcome>) -> Result<CvOutcome> {
    let reports: Vec<MetricsReport> = folds.iter().map(|f| f.metrics.clone()).collect();
    Ok(CvOutcome { summary: summarize_cv(&reports)?, folds })
}

/// Every fold of `plan`, on up to `jobs` threads.
pub fn run_cv(data: &EegDataset, model: &ModelConfig, run: &TrainConfig, plan: &FoldPlan, jobs: usize) -> Result<CvOutcome> {
    let folds: Vec<usize> = (0..plan.folds.len()).collect();
    let outcomes = parallel_map(&folds, jobs, |&i| run_fold(data, model, run, plan, i));
    summarize(outcomes.into_iter().collect::<Result<Vec<_>>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationAxis {
    /// Which stages are present.
    Module,
    /// Residual-block kernel size.
    Kernel,
    /// Delta step.
    Step,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "module" => Ok(Self::Module),
            "kernel" => Ok(Self::Kernel),
            "step" => Ok(Self::Step),
            _ => Err(invalid(format!("unknown ablation axis {s:?} (expected module, kernel or step)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Module => "module",
            Self::Kernel => "kernel",
            Self::Step => "step",
        }
    }

    /// The grid swept when no values are given.
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            Self::Module => &["mlp_only", "delta_mlp", "gtc_mlp", "full"],
            Self::Kernel => &["1", "3", "5", "7"],
            Self::Step => &["1", "2", "3"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

/// One config per value, identical to `base` except along `axis`.
pub fn ablation_configs(base: &ModelConfig, axis: AblationAxis, values: &[String]) -> Result<Vec<(String, ModelConfig)>> {
    if values.is_empty() {
        return Err(invalid("ablation needs at least one value"));
    }
    values
        .iter()
        .map(|raw| {
            let value = raw.trim();
            let mut c = base.clone();
            let number = || value.parse::<usize>().map_err(|_| invalid(format!("{} value {value:?} is not a count", axis.name())));
            match axis {
                AblationAxis::Module => c.variant = Variant::parse(value)?,
                AblationAxis::Kernel => {
                    c.kernel_size = number()?;
                    if c.kernel_size % 2 == 0 {
                        return Err(invalid(format!("kernel size must be odd, got {value}")));
                    }
                }
                AblationAxis::Step => c.delta_step = number()?,
            }
            c.validate()?;
            Ok((value.to_string(), c))
        })
        .collect()
}

/// Cross-validate every ablation cell on the same fold plan. Work is spread
/// over cells and folds together.
pub fn run_ablation(
    data: &EegDataset,
    cells: &[(String, ModelConfig)],
    run: &TrainConfig,
    plan: &FoldPlan,
    jobs: usize,
) -> Result<Vec<(String, CvOutcome)>> {
    let k = plan.folds.len();
    let work: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let mut results = parallel_map(&work, jobs, |&(c, f)| run_fold(data, &cells[c].1, run, plan, f)).into_iter();
    cells
        .iter()
        .map(|(label, _)| {
            let folds = results.by_ref().take(k).collect::<Result<Vec<_>>>()?;
            Ok((label.clone(), summarize(folds)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..23).collect();
        assert_eq!(parallel_map(&items, 4, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
    }

    #[test]
    fn ablation_grids() {
        let base = ModelConfig::new(17, 1600, 3);
        let k = ablation_configs(&base, AblationAxis::Kernel, &AblationAxis::Kernel.default_values()).unwrap();
        assert_eq!(k.iter().map(|(_, c)| c.kernel_size).collect::<Vec<_>>(), vec![1, 3, 5, 7]);
        let s = ablation_configs(&base, AblationAxis::Step, &AblationAxis::Step.default_values()).unwrap();
        assert_eq!(s.iter().map(|(_, c)| c.delta_step).collect::<Vec<_>>(), vec![1, 2, 3]);
        let m = ablation_configs(&base, AblationAxis::Module, &AblationAxis::Module.default_values()).unwrap();
        assert_eq!(m.len(), 4);
        assert!(ablation_configs(&base, AblationAxis::Kernel, &["4".into()]).is_err());
    }
}
