use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use umseg::camera::CameraModel;
use umseg::graph::{radius_outlier_filter, voxel_downsample, DistanceMetric, FeatureMap, PointCloud};
use umseg::hierarchy::BinaryPartitionTree;
use umseg::io::{self, DepthMap, PlyFormat};
use umseg::losses::{
    depth_continuity_loss, extract_patches, feature_loss, sample_patches_in_masks, training_graph,
    ContrastiveConfig, DepthPatchBatch,
};
use umseg::mask::Mask;
use umseg::masktree::{build_mask_tree, sample_pairs, MaskSet, MaskTree, PairBatch, ROOT};
use umseg::metrics::{linspace, nc_report, si_score, vc_score, MaskQuery, MetricReport, TrialConfig, ViewData};
use umseg::segmentation::{
    segment_2d, segment_3d, transfer_labels, LabelMap, ProjectedSegmenter, Segmenter, Suppression,
};

use crate::args::*;
use crate::{CliError, CliResult};

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    let metric = DistanceMetric::from(g.metric);
    match &cli.command {
        Command::Segment2d(a) => segment2d(a, metric),
        Command::Segment3d(a) => segment3d(a, metric),
        Command::Transfer(a) => transfer(a),
        Command::Masktree(a) => masktree(a),
        Command::Samplepairs(a) => samplepairs(a, g.seed),
        Command::Loss(a) => loss(a, metric, g.seed),
        Command::EvalNc(a) => eval_nc(a, metric),
        Command::EvalSi(a) => eval_si(a, metric, g.seed),
        Command::EvalVc(a) => eval_vc(a, metric, g.seed),
        Command::BptExport(a) => bpt_export(a, metric),
        Command::RenderLabels(a) => render_labels(a),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Pretty JSON to `out`, or to stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(umseg::Error::from)?;
    text.push('\n');
    match out {
        Some(p) => io::write_bytes(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn check_threshold(t: f64) -> CliResult<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("threshold must be finite and nonnegative, got {t}")))
    }
}

fn load_masks(path: &Path) -> CliResult<MaskSet> {
    let loaded = io::read_masks(path)?;
    if !loaded.rejected.is_empty() {
        log::warn!("{}: {} masks rejected", path.display(), loaded.rejected.len());
    }
    Ok(loaded.set)
}

fn load_view_geometry(depth: &Path, camera: &Path) -> CliResult<(CameraModel, Vec<f64>)> {
    let cam = io::read_camera(camera)?;
    let DepthMap { height, width, values } = io::read_depth(depth)?;
    if (height, width) != (cam.height, cam.width) {
        return Err(invalid(format!(
            "{} is {height}x{width} but {} describes a {}x{} image",
            depth.display(),
            camera.display(),
            cam.height,
            cam.width
        )));
    }
    Ok((cam, values))
}

fn sizes_by_label(labels: &[u32]) -> BTreeMap<u32, usize> {
    let mut sizes = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    sizes
}

fn label_summary(labels: &[u32]) -> Value {
    let sizes = sizes_by_label(labels);
    let unlabeled = sizes.get(&0).copied().unwrap_or(0);
    let segments: Vec<Value> = sizes
        .iter()
        .filter(|(l, _)| **l != 0)
        .map(|(l, n)| json!({ "label": l, "size": n }))
        .collect();
    json!({
        "components": segments.len(),
        "sizes": segments,
        "unlabeled": unlabeled,
    })
}

fn segment2d(a: &Segment2dArgs, metric: DistanceMetric) -> CliResult<()> {
    check_threshold(a.t)?;
    let fmap = io::read_feature_map(&a.features)?;
    let lm = segment_2d(&fmap, a.t, a.min_pixels, metric)?;
    io::write_label_png(&a.out, &lm)?;
    let mut summary = label_summary(lm.labels());
    summary["height"] = json!(lm.height());
    summary["width"] = json!(lm.width());
    summary["threshold"] = json!(a.t);
    emit(&summary, a.summary.as_deref())
}

fn preprocess(cloud: PointCloud, voxel: f64, radius: f64, min_neighbors: usize) -> CliResult<PointCloud> {
    let mut cloud = cloud;
    if voxel > 0.0 {
        cloud = voxel_downsample(&cloud, voxel)?;
        log::info!("{} points after voxel downsampling", cloud.len());
    }
    if radius > 0.0 {
        cloud = radius_outlier_filter(&cloud, radius, min_neighbors)?;
        log::info!("{} points after outlier removal", cloud.len());
    }
    Ok(cloud)
}

fn segment3d(a: &Segment3dArgs, metric: DistanceMetric) -> CliResult<()> {
    check_threshold(a.t)?;
    let raw = io::read_ply(&a.cloud)?;
    let input = raw.len();
    let cloud = preprocess(raw, a.voxel, a.outlier_radius, a.outlier_min)?;
    if cloud.is_empty() {
        return Err(invalid(format!("{}: no points left after filtering", a.cloud.display())));
    }
    let labeled = segment_3d(&cloud, a.t, a.k_graph, a.keep, metric)?;
    let format = match a.encoding {
        PlyEncoding::Ascii => PlyFormat::Ascii,
        PlyEncoding::Binary => PlyFormat::BinaryLittleEndian,
    };
    io::write_ply(&a.out, &labeled, format)?;
    let mut summary = label_summary(labeled.labels().expect("segment_3d labels the cloud"));
    summary["input_points"] = json!(input);
    summary["points"] = json!(labeled.len());
    summary["threshold"] = json!(a.t);
    emit(&summary, a.summary.as_deref())
}

fn transfer(a: &TransferArgs) -> CliResult<()> {
    let cloud = io::read_ply(&a.cloud)?;
    if cloud.labels().is_none() {
        return Err(invalid(format!("{} has no label property", a.cloud.display())));
    }
    let (cam, depth) = load_view_geometry(&a.depth, &a.camera)?;
    let lm = transfer_labels(&cloud, &depth, &cam, a.k_query, a.d_max)?;
    io::write_label_png(&a.out, &lm)?;
    emit(&label_summary(lm.labels()), a.summary.as_deref())
}

fn tree_json(tree: &MaskTree, set: &MaskSet) -> Value {
    let nodes: Vec<Value> = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(id, n)| {
            json!({
                "id": id,
                "source": n.source,
                "parent": n.parent,
                "children": n.children,
                "depth": tree.depth(id),
                "area": n.mask.area(),
            })
        })
        .collect();
    json!({
        "view_id": set.view_id,
        "height": tree.height,
        "width": tree.width,
        "p_in": tree.p_in,
        "p_iou": tree.p_iou,
        "root": ROOT,
        "leaves": tree.leaves(),
        "dropped": tree.dropped,
        "nodes": nodes,
    })
}

fn checked_tree(set: &MaskSet, opts: &TreeOpts) -> CliResult<MaskTree> {
    for (name, v) in [("p-in", opts.p_in), ("p-iou", opts.p_iou)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("--{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(build_mask_tree(set, opts.p_in, opts.p_iou))
}

fn masktree(a: &MaskTreeArgs) -> CliResult<()> {
    let set = load_masks(&a.masks)?;
    let tree = checked_tree(&set, &a.tree)?;
    emit(&tree_json(&tree, &set), a.out.as_deref())
}

fn samplepairs(a: &SamplePairsArgs, seed: u64) -> CliResult<()> {
    let set = load_masks(&a.masks)?;
    let tree = checked_tree(&set, &a.tree)?;
    let batch = sample_pairs(&tree, a.pairs, seed)?;
    log::info!("{} pairs over {} levels", batch.pair_count(), batch.levels.len());
    emit(&batch, a.out.as_deref())
}

struct FeatureObjective<'a> {
    batch: &'a PairBatch,
    cfg: ContrastiveConfig,
    samples: usize,
    neighbors: usize,
    metric: DistanceMetric,
    seed: u64,
}

impl FeatureObjective<'_> {
    fn evaluate(&self, fmap: &FeatureMap) -> CliResult<(f64, Vec<f64>, umseg::losses::LossDiagnostics)> {
        let g = training_graph(fmap, self.batch, self.samples, self.neighbors, self.metric, self.seed)?;
        let bpt = BinaryPartitionTree::build(&g.graph);
        let (r, diag) = feature_loss(fmap, &g, &bpt, self.batch, &self.cfg)?;
        Ok((r.value, r.gradient, diag))
    }
}

/// `max |fd − analytic|` over `coords`, divided by the largest analytic
/// magnitude.
fn relative_error(analytic: &[f64], coords: &[usize], mut fd: impl FnMut(usize) -> CliResult<f64>) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    for &i in coords {
        worst = worst.max((fd(i)? - analytic[i]).abs());
    }
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

fn strided(n: usize, count: usize) -> Vec<usize> {
    if count == 0 || n == 0 {
        return Vec::new();
    }
    let stride = n.div_ceil(count).max(1);
    (0..n).step_by(stride).collect()
}

fn loss(a: &LossArgs, metric: DistanceMetric, seed: u64) -> CliResult<()> {
    let fmap = io::read_feature_map(&a.features)?;
    let batch: PairBatch = match (&a.pairs, &a.masks) {
        (Some(p), _) => serde_json::from_slice(&io::read_bytes(p)?).map_err(umseg::Error::from)?,
        (None, Some(m)) => {
            let set = load_masks(m)?;
            sample_pairs(&checked_tree(&set, &a.tree)?, a.pairs_per_mask, seed)?
        }
        (None, None) => unreachable!("clap requires --pairs or --masks"),
    };
    let obj = FeatureObjective {
        batch: &batch,
        cfg: ContrastiveConfig {
            temperature: a.tau,
            euclid_weight: a.alpha,
            exponent_sign: a.sign.into(),
            variant: a.variant.into(),
        },
        samples: a.samples,
        neighbors: a.neighbors,
        metric,
        seed,
    };
    obj.cfg.validate()?;
    let (value, gradient, diag) = obj.evaluate(&fmap)?;
    let grad_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut report = json!({
        "feature_loss": {
            "value": value,
            "gradient_norm": grad_norm,
            "diagnostics": diag,
            "pairs": batch.pair_count(),
            "config": obj.cfg,
        }
    });

    let mut passed = true;
    if a.check_grad {
        if a.fd_step.is_nan() || a.fd_step <= 0.0 {
            return Err(invalid("--fd-step must be positive"));
        }
        let coords = strided(gradient.len(), a.check_coords);
        let h = a.fd_step;
        let err = relative_error(&gradient, &coords, |i| {
            let mut plus = fmap.clone();
            plus.data_mut()[i] += h;
            let mut minus = fmap.clone();
            minus.data_mut()[i] -= h;
            Ok((obj.evaluate(&plus)?.0 - obj.evaluate(&minus)?.0) / (2.0 * h))
        })?;
        passed &= err < a.fd_tolerance;
        report["feature_loss"]["grad_check"] = json!({
            "coordinates": coords.len(),
            "max_relative_error": err,
        });
    }

    if let (Some(depth_path), Some(mask_path)) = (&a.depth, &a.depth_masks) {
        let depth = io::read_depth(depth_path)?;
        let set = load_masks(mask_path)?;
        if (set.height, set.width) != (depth.height, depth.width) {
            return Err(invalid("depth map and depth masks have different sizes"));
        }
        let delta_theta = match (a.delta_theta, &a.camera) {
            (Some(d), _) => d,
            (None, Some(c)) => (1.0 / io::read_camera(c)?.fl_x).atan(),
            (None, None) => return Err(invalid("the depth term needs --delta-theta or --camera")),
        };
        let origins = sample_patches_in_masks(&set.masks, a.patches_per_mask, seed);
        let dbatch = DepthPatchBatch {
            patches: extract_patches(&depth.values, depth.width, &origins),
            delta_theta,
            threshold: a.dc_threshold,
        };
        let r = depth_continuity_loss(&dbatch)?;
        report["depth_loss"] = json!({
            "value": r.value,
            "patches": dbatch.patches.len(),
            "skipped": r.skipped,
            "delta_theta": delta_theta,
            "threshold": a.dc_threshold,
        });
        if a.check_grad {
            let flat: Vec<f64> = r.gradient.iter().flatten().copied().collect();
            let coords: Vec<usize> = (0..flat.len()).collect();
            let h = a.fd_step;
            let err = relative_error(&flat, &coords, |i| {
                let eval = |delta: f64| -> CliResult<f64> {
                    let mut b = dbatch.clone();
                    b.patches[i / 16][i % 16] += delta;
                    Ok(depth_continuity_loss(&b)?.value)
                };
                Ok((eval(h)? - eval(-h)?) / (2.0 * h))
            })?;
            passed &= err < a.fd_tolerance;
            report["depth_loss"]["grad_check"] = json!({
                "coordinates": coords.len(),
                "max_relative_error": err,
            });
        }
    }

    emit(&report, a.out.as_deref())?;
    if !passed {
        return Err(invalid(format!(
            "finite-difference check exceeded relative tolerance {}",
            a.fd_tolerance
        )));
    }
    Ok(())
}

fn sweep(opts: &SweepOpts) -> Vec<f64> {
    linspace(opts.sweep_min, opts.sweep_max, opts.sweep_steps)
}

fn trial_config(opts: &TrialOpts, seed: u64) -> CliResult<TrialConfig> {
    let cfg = TrialConfig {
        trials_per_mask: opts.trials,
        seed,
        threshold_sweep: sweep(&opts.sweep),
        ..TrialConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn at_least(masks: Vec<Mask>, min_pixels: usize) -> Vec<Mask> {
    masks.into_iter().filter(|m| m.area() >= min_pixels).collect()
}

/// Masks from a mask JSON or, for `.png`, from the nonzero ids of a label map.
fn load_prediction(path: &Path) -> CliResult<Vec<Mask>> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        Ok(io::read_label_png(path)?.masks())
    } else {
        Ok(load_masks(path)?.masks)
    }
}

#[derive(Serialize)]
struct LeveledReport {
    metric: &'static str,
    score: f64,
    levels: Vec<MetricReport>,
}

fn eval_nc(a: &EvalNcArgs, metric: DistanceMetric) -> CliResult<()> {
    let pred = match &a.features {
        Some(f) => {
            let fmap = io::read_feature_map(f)?;
            let seg = Segmenter::from_feature_map(&fmap, metric)?.with_suppression(Suppression::MinSize(a.min_pixels));
            let mut all = Vec::new();
            for t in sweep(&a.sweep) {
                all.extend(LabelMap::new(fmap.height(), fmap.width(), seg.labels_at(t)?)?.masks());
            }
            all
        }
        None => {
            let mut all = Vec::new();
            for p in &a.pred {
                all.extend(load_prediction(p)?);
            }
            at_least(all, a.min_pixels)
        }
    };
    let mut levels = Vec::new();
    for path in &a.gt {
        let gt = at_least(load_masks(path)?.masks, a.min_pixels);
        if gt.is_empty() {
            log::warn!("{}: no ground-truth mask has {} pixels; level skipped", path.display(), a.min_pixels);
            continue;
        }
        levels.push(nc_report(&gt, &pred)?);
    }
    if levels.is_empty() {
        return Err(invalid("no ground-truth level has a usable mask"));
    }
    let scores: Vec<f64> = levels.iter().map(|r| r.score).collect();
    let report = LeveledReport {
        metric: "nc",
        score: umseg::metrics::pairwise_sum(&scores) / scores.len() as f64,
        levels,
    };
    emit(&report, a.out.as_deref())
}

fn cloud_segmenter(path: &Path, opts: &CloudOpts, metric: DistanceMetric) -> CliResult<(PointCloud, Segmenter)> {
    let cloud = io::read_ply(path)?;
    if cloud.is_empty() {
        return Err(invalid(format!("{} has no points", path.display())));
    }
    let seg = Segmenter::from_point_cloud(&cloud, opts.k_graph, metric)?.with_suppression(Suppression::KeepLargest(opts.keep));
    Ok((cloud, seg))
}

fn feature_segmenter(path: &Path, metric: DistanceMetric) -> CliResult<Segmenter> {
    Ok(Segmenter::from_feature_map(&io::read_feature_map(path)?, metric)?)
}

fn eval_si(a: &EvalSiArgs, metric: DistanceMetric, seed: u64) -> CliResult<()> {
    let mut cfg = trial_config(&a.trials, seed)?;
    cfg.si_sampling = a.sampling.into();
    let gt: Vec<MaskSet> = a.gt.iter().map(|p| load_masks(p)).collect::<CliResult<_>>()?;
    let levels = |set: &MaskSet| vec![at_least(set.masks.clone(), a.trials.min_pixels)];

    let report = if let Some(cloud_path) = &a.cloud {
        if a.depth.len() != gt.len() || a.camera.len() != gt.len() {
            return Err(invalid("cloud mode needs one --depth and one --camera per --gt"));
        }
        let (cloud, seg) = cloud_segmenter(cloud_path, &a.cloud_opts, metric)?;
        let mut views = Vec::new();
        let mut projected = Vec::new();
        for (i, set) in gt.iter().enumerate() {
            let (cam, depth) = load_view_geometry(&a.depth[i], &a.camera[i])?;
            views.push(ViewData::new(cam.clone(), depth.clone(), levels(set))?);
            projected.push(ProjectedSegmenter::new(
                &seg,
                &cloud,
                cam,
                depth,
                a.cloud_opts.k_query,
                a.cloud_opts.d_max,
            )?);
        }
        let segs: Vec<&dyn MaskQuery> = projected.iter().map(|p| p as &dyn MaskQuery).collect();
        si_score(&segs, &views, &cfg)?
    } else {
        if a.features.len() != gt.len() {
            return Err(invalid(format!("{} --features for {} --gt", a.features.len(), gt.len())));
        }
        let segmenters: Vec<Segmenter> = a
            .features
            .iter()
            .map(|p| feature_segmenter(p, metric))
            .collect::<CliResult<_>>()?;
        let views: Vec<ViewData> = gt
            .iter()
            .map(|set| ViewData::from_masks(set.height, set.width, levels(set)))
            .collect::<umseg::Result<_>>()?;
        let segs: Vec<&dyn MaskQuery> = segmenters.iter().map(|s| s as &dyn MaskQuery).collect();
        si_score(&segs, &views, &cfg)?
    };
    emit(&report, a.out.as_deref())
}

fn read_visibility(path: &Path) -> CliResult<Mask> {
    let lm = io::read_label_png(path)?;
    Ok(Mask::from_fn(lm.height(), lm.width(), |r, c| lm.get(r * lm.width() + c) != 0))
}

fn eval_vc(a: &EvalVcArgs, metric: DistanceMetric, seed: u64) -> CliResult<()> {
    let cfg = trial_config(&a.trials, seed)?;
    let gt = load_masks(&a.src_gt)?;
    let (src_cam, src_depth) = load_view_geometry(&a.src_depth, &a.src_camera)?;
    let (dst_cam, dst_depth) = load_view_geometry(&a.dst_depth, &a.dst_camera)?;
    let mut src = ViewData::new(
        src_cam.clone(),
        src_depth.clone(),
        vec![at_least(gt.masks, a.trials.min_pixels)],
    )?;
    let mut dst = ViewData::new(dst_cam.clone(), dst_depth.clone(), Vec::new())?;
    if let (Some(sv), Some(dv)) = (&a.src_visibility, &a.dst_visibility) {
        src.visibility = Some(read_visibility(sv)?);
        dst.visibility = Some(read_visibility(dv)?);
    }

    let report = match (&a.cloud, &a.src_features, &a.dst_features) {
        (Some(cloud_path), _, _) => {
            let (cloud, seg) = cloud_segmenter(cloud_path, &a.cloud_opts, metric)?;
            let o = &a.cloud_opts;
            let s = ProjectedSegmenter::new(&seg, &cloud, src_cam, src_depth, o.k_query, o.d_max)?;
            let d = ProjectedSegmenter::new(&seg, &cloud, dst_cam, dst_depth, o.k_query, o.d_max)?;
            vc_score(&s, &d, &src, &dst, &cfg, a.visibility_tol, a.retry_cap)?
        }
        (None, Some(sf), Some(df)) => {
            let s = feature_segmenter(sf, metric)?;
            let d = feature_segmenter(df, metric)?;
            vc_score(&s, &d, &src, &dst, &cfg, a.visibility_tol, a.retry_cap)?
        }
        _ => unreachable!("clap requires a cloud or both feature maps"),
    };
    emit(&report, a.out.as_deref())
}

fn bpt_export(a: &BptExportArgs, metric: DistanceMetric) -> CliResult<()> {
    let seg = match (&a.features, &a.cloud) {
        (Some(f), _) => feature_segmenter(f, metric)?,
        (None, Some(c)) => {
            let cloud = io::read_ply(c)?;
            Segmenter::from_point_cloud(&cloud, a.k_graph, metric)?
        }
        (None, None) => unreachable!("clap requires --features or --cloud"),
    };
    let tree = seg.tree();
    io::write_dendrogram_json(&a.out, tree)?;
    emit(
        &json!({
            "leaves": tree.leaf_count(),
            "merges": tree.internal_count(),
            "roots": tree.roots().len(),
        }),
        None,
    )
}

fn render_labels(a: &RenderLabelsArgs) -> CliResult<()> {
    let lm = io::read_label_png(&a.labels)?;
    io::write_bytes(&a.out, &io::encode_color_png(&lm)?)?;
    emit(&label_summary(lm.labels()), None)
}
