use setfusion_core::harness::{
    generate_synthetic, load_dataset, load_model, read_set_file, run_ablation, run_dim_sweep, run_experiment,
    save_dataset, save_model, Protocol, SyntheticSpec,
};
use setfusion_core::{fit, predict as classify, ImageSet, Result};

use crate::{EvalArgs, PredictArgs, SynthArgs, TrainCmd};

pub fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        classes: a.classes,
        sets_per_class: a.sets_per_class,
        dim: a.dim,
        samples: a.samples,
        separation: a.separation,
        seed: a.seed,
    };
    let sets = generate_synthetic(&spec)?;
    let manifest = save_dataset(&a.out, &sets)?;
    println!("wrote {} sets to {}", sets.len(), manifest.display());
    Ok(())
}

pub fn train(a: &TrainCmd) -> Result<()> {
    let cfg = a.train.config()?;
    let sets = load_dataset(&a.manifest)?;
    let model = fit(&sets, &cfg)?;
    save_model(&model, &a.out)?;
    println!(
        "trained on {} sets, {} iterations, final objective {:.6}, d_w = {}",
        model.n_train(),
        model.objective_trace.len(),
        model.objective_trace.last().copied().unwrap_or(f64::NAN),
        model.transform.ncols()
    );
    println!("model saved to {}", a.out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs, ablate: bool) -> Result<()> {
    let cfg = a.train.config()?;
    let sets = load_dataset(&a.manifest)?;
    let protocol = Protocol {
        splits: a.splits,
        train_per_class: a.train_per_class,
        parallel: a.parallel,
    };
    let report = if ablate {
        run_ablation(&sets, &cfg, &protocol)?
    } else if !a.dw_sweep.is_empty() {
        run_dim_sweep(&sets, &cfg, &protocol, &a.dw_sweep)?
    } else {
        run_experiment(&sets, &cfg, &protocol)?
    };
    print!("{}", report.summary());
    match &a.report {
        Some(path) => {
            for p in report.write(path)? {
                println!("wrote {}", p.display());
            }
        }
        None => print!("{}", report.split_table()),
    }
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let features = read_set_file(&a.set)?;
    let id = a
        .set
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let set = ImageSet::new(features, "", id)?;
    let p = classify(&set, &model)?;
    println!("label: {}", p.label);
    println!("rank,set_id,label,distance");
    for (rank, i) in p.top_k(a.top).into_iter().enumerate() {
        let g = &model.gallery[i];
        println!("{},{},{},{:.6e}", rank + 1, g.set_id, g.label, p.distances[i]);
    }
    Ok(())
}
