use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use diffseg::baselines::{felzenszwalb, kmeans_segment};
use diffseg::eval::{evaluate_dataset, DatasetItem, AP_RULE};
use diffseg::io::{
    list_frames, load_gt_bundle, load_image, load_labelmap, load_model, load_scribbles, save_labelmap, save_model,
    RunConfig,
};
use diffseg::pipeline::{apply_fixed_frames, extract_segments, segment, train_reference, IterationRecord};
use diffseg::Image;

use crate::{ApplyArgs, BaselineCommand, BaselineIo, Cli, Command, EvalArgs, SegmentArgs, TrainRefArgs};

type Overrides = Vec<(&'static str, String)>;

fn put<T: ToString>(out: &mut Overrides, key: &'static str, value: Option<T>) {
    if let Some(v) = value {
        out.push((key, v.to_string()));
    }
}

fn put_path(out: &mut Overrides, key: &'static str, value: &Option<PathBuf>) {
    put(out, key, value.as_ref().map(|p| p.display().to_string()));
}

fn config(file: Option<&Path>, overrides: Overrides) -> Result<RunConfig> {
    let text = file
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display())))
        .transpose()?;
    Ok(RunConfig::layered(text.as_deref(), overrides)?)
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .with_context(|| format!("missing {what} (flag or config key)"))
}

pub fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Segment(a) => run_segment(file, a),
        Command::TrainRef(a) => run_train_ref(file, a),
        Command::Apply(a) => run_apply(file, a),
        Command::Baseline(b) => run_baseline(file, b),
        Command::Eval(a) => run_eval(file, a),
    }
}

/// `<out>` with its extension replaced by `loss.csv`.
fn loss_csv_path(out: &Path) -> PathBuf {
    out.with_extension("loss.csv")
}

fn write_loss_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut s = String::from("iteration,sim,con,scr,total,unique_labels\n");
    for r in history {
        let l = r.loss;
        writeln!(s, "{},{},{},{},{},{}", r.iteration, l.sim, l.con, l.scr, l.total, r.unique_labels)?;
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn run_segment(file: Option<&Path>, a: SegmentArgs) -> Result<()> {
    let mut ov = a.hp.overrides();
    put_path(&mut ov, "input", &a.input);
    put_path(&mut ov, "output", &a.out);
    put_path(&mut ov, "viz", &a.viz);
    put_path(&mut ov, "scribbles", &a.scribbles);
    let cfg = config(file, ov)?;
    let input = required(&cfg.input, "input image")?;
    let out = required(&cfg.output, "--out")?;
    let image = load_image(input)?;
    let scr = cfg
        .scribbles
        .as_deref()
        .map(|p| load_scribbles(p, cfg.hp.clusters))
        .transpose()?;
    let result = segment(&image, &cfg.hp, scr.as_ref())?;
    save_labelmap(&result.labels, out, cfg.viz.as_deref())?;
    write_loss_csv(&loss_csv_path(out), &result.loss_history)?;
    println!(
        "{}: {} labels after {} iterations",
        input.display(),
        result.unique_label_count,
        result.iterations_run
    );
    Ok(())
}

fn run_train_ref(file: Option<&Path>, a: TrainRefArgs) -> Result<()> {
    let mut ov = a.hp.overrides();
    put_path(&mut ov, "model", &a.out);
    put(&mut ov, "epochs", a.epochs);
    let cfg = config(file, ov)?;
    let out = required(&cfg.model, "--out")?;
    let images = a.images.iter().map(load_image).collect::<diffseg::Result<Vec<Image>>>()?;
    let (params, history) = train_reference(&images, &cfg.hp, cfg.epochs)?;
    save_model(&params, out)?;
    write_loss_csv(&loss_csv_path(out), &history)?;
    println!("{}: trained on {} images for {} epochs", out.display(), images.len(), cfg.epochs);
    Ok(())
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("{} has no usable file name", path.display()))
}

fn run_apply(file: Option<&Path>, a: ApplyArgs) -> Result<()> {
    let mut ov = Overrides::new();
    put_path(&mut ov, "input", &a.input);
    put_path(&mut ov, "model", &a.model);
    put_path(&mut ov, "out_dir", &a.out_dir);
    put(&mut ov, "eps", a.eps);
    put(&mut ov, "padding", a.padding);
    let cfg = config(file, ov)?;
    let input = required(&cfg.input, "input image or directory")?;
    let out_dir = required(&cfg.out_dir, "--out-dir")?;
    let params = load_model(required(&cfg.model, "--model")?)?;
    let (layers, features, clusters) = params.dims();
    let hp = diffseg::HyperParams {
        layers,
        features,
        clusters,
        min_labels: cfg.hp.min_labels.min(clusters),
        ..cfg.hp.clone()
    };
    let paths = if input.is_dir() {
        list_frames(input)?
    } else {
        vec![input.to_path_buf()]
    };
    if paths.is_empty() {
        bail!("{}: no frames found", input.display());
    }
    let frames = paths.iter().map(load_image).collect::<diffseg::Result<Vec<Image>>>()?;
    let labels = apply_fixed_frames(&params, &frames, &hp)?;
    let viz_dir = out_dir.join("viz");
    std::fs::create_dir_all(&viz_dir).with_context(|| format!("creating {}", viz_dir.display()))?;
    for (path, l) in paths.iter().zip(&labels) {
        let name = format!("{}.png", file_stem(path)?);
        save_labelmap(l, out_dir.join(&name), Some(&viz_dir.join(&name)))?;
    }
    println!("{}: labelled {} frames", out_dir.display(), labels.len());
    Ok(())
}

fn baseline_io(ov: &mut Overrides, io: &BaselineIo) {
    put_path(ov, "input", &io.input);
    put_path(ov, "output", &io.out);
    put_path(ov, "viz", &io.viz);
}

fn run_baseline(file: Option<&Path>, b: BaselineCommand) -> Result<()> {
    let mut ov = Overrides::new();
    let kmeans_mode = matches!(b, BaselineCommand::Kmeans(_));
    match &b {
        BaselineCommand::Kmeans(a) => {
            baseline_io(&mut ov, &a.io);
            put(&mut ov, "k", a.k);
            put(&mut ov, "window", a.window);
            put(&mut ov, "max_iter", a.max_iter);
            put(&mut ov, "seed", a.seed);
        }
        BaselineCommand::Gs(a) => {
            baseline_io(&mut ov, &a.io);
            put(&mut ov, "tau", a.tau);
            put(&mut ov, "sigma", a.sigma);
            put(&mut ov, "min_size", a.min_size);
        }
    }
    let cfg = config(file, ov)?;
    let input = required(&cfg.input, "input image")?;
    let out = required(&cfg.output, "--out")?;
    let image = load_image(input)?;
    let labels = if kmeans_mode {
        kmeans_segment(&image, cfg.k, cfg.window, cfg.hp.seed, cfg.max_iter)?
    } else {
        felzenszwalb(&image, &cfg.gs)?
    };
    save_labelmap(&labels, out, cfg.viz.as_deref())?;
    println!("{}: {} labels", input.display(), labels.unique_count());
    Ok(())
}

/// Ground truth for `stem`: a `<stem>/` directory of variants or a single
/// `<stem>.<ext>` raster.
fn find_gt(gt_dir: &Path, stem: &str) -> Result<PathBuf> {
    let dir = gt_dir.join(stem);
    if dir.is_dir() {
        return Ok(dir);
    }
    for path in list_frames(gt_dir)? {
        if file_stem(&path)? == stem {
            return Ok(path);
        }
    }
    bail!("no ground truth for `{stem}` in {}", gt_dir.display())
}

fn run_eval(file: Option<&Path>, a: EvalArgs) -> Result<()> {
    let mut ov = Overrides::new();
    put_path(&mut ov, "pred_dir", &a.pred_dir);
    put_path(&mut ov, "gt_dir", &a.gt_dir);
    put(&mut ov, "gt_mode", a.mode);
    put(&mut ov, "pr_thresholds", a.pr_thresholds);
    put(&mut ov, "miou_aggregation", a.aggregation);
    put_path(&mut ov, "output", &a.out);
    let cfg = config(file, ov)?;
    let pred_dir = required(&cfg.pred_dir, "--pred-dir")?;
    let gt_dir = required(&cfg.gt_dir, "--gt-dir")?;
    let mut items = Vec::new();
    for path in list_frames(pred_dir)? {
        let name = file_stem(&path)?;
        let gt = load_gt_bundle(find_gt(gt_dir, &name)?)?;
        let est = extract_segments(&load_labelmap(&path)?);
        items.push(DatasetItem { name, est, gt });
    }
    let report = evaluate_dataset(&items, cfg.gt_mode, &cfg.pr_thresholds, cfg.miou_aggregation)?;
    let mut s = String::from("metric,threshold,value\n");
    writeln!(s, "images,,{}", items.len())?;
    writeln!(s, "gt_mode,,{}", cfg.gt_mode)?;
    writeln!(s, "miou_aggregation,,{}", cfg.miou_aggregation)?;
    writeln!(s, "ap_rule,,{AP_RULE}")?;
    writeln!(s, "pairs,,{}", report.pairs)?;
    writeln!(s, "gt_segments,,{}", report.gt_segments)?;
    writeln!(s, "est_segments,,{}", report.est_segments)?;
    writeln!(s, "miou,,{}", report.miou)?;
    for c in &report.curves {
        writeln!(s, "ap,{},{}", c.threshold, c.ap)?;
        writeln!(s, "true_positives,{},{}", c.threshold, c.true_positives)?;
    }
    match &cfg.output {
        Some(p) => std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{s}"),
    }
    Ok(())
}
