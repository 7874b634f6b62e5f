import logging
from pathlib import Path
from typing import Optional, Tuple

import click
import numpy as np

from headcam.analysis import (
    SweepConfig,
    cam,
    csi_table,
    export_attention_maps,
    export_top_images,
    feature_response_table,
    pca_curve,
    pca_table,
    run_sweep,
)
from headcam.baselines import HogExtractor, random_backbone
from headcam.config import RunConfig, load_run_config, write_resolved_config
from headcam.errors import HeadcamError, UsageError
from headcam.fixtures import generate_episodic, generate_shapes, write_dataset
from headcam.importers import FrameStore, Manifest, assign_temporal_classes, discover_recordings, ingest_recordings
from headcam.objectives import Objective, load_checkpoint, train
from headcam.probing import (
    BackboneExtractor,
    EmbeddingSet,
    binary_task,
    evaluate_probe,
    extract_embeddings,
    fit_probe,
    load_image_folder,
    write_results,
)
from headcam.reporting import write_report

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class HeadcamGroup(click.Group):
    """Click group that turns headcam errors into their exit codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except HeadcamError as exc:
            logger.error(str(exc))
            ctx.exit(exc.exit_code)


def _prepare(ctx: click.Context, overrides: dict) -> Tuple[RunConfig, Path]:
    """Resolves the run config (flag > file > default) and writes it next to the outputs."""
    options = ctx.find_root().obj
    run_config = load_run_config(options["path_config"], {**options["overrides"], **overrides})
    dir_output = Path(run_config.output_dir)
    write_resolved_config(run_config, dir_output)
    return run_config, dir_output


def _read_dataset(dir_data: Path, labeled_only: bool) -> Tuple[Manifest, np.ndarray]:
    manifest = Manifest.read(dir_data / "manifest.ndjson")
    if labeled_only:
        manifest = manifest.labeled()
    return manifest, FrameStore(manifest, dir_data).load()


def _labeled_embeddings(source, dir_data: Optional[Path], image_folder: Optional[Path], name: str) -> Tuple[EmbeddingSet, str]:
    if image_folder is not None:
        frames, labels, vocabulary = load_image_folder(image_folder)
        return extract_embeddings(source, frames, labels=labels, vocabulary=vocabulary, name=name), image_folder.name
    if dir_data is None:
        raise UsageError("Either --data-dir or --image-folder is required.")
    manifest, frames = _read_dataset(dir_data, labeled_only=True)
    labels, vocabulary = manifest.label_ids()
    embeddings = extract_embeddings(
        source, frames, labels=labels, frame_ids=manifest.frame_ids, exemplar_ids=manifest.exemplar_ids(),
        vocabulary=vocabulary, name=name,
    )
    return embeddings, dir_data.name


def _feature_source(run_config: RunConfig, checkpoint: Optional[Path], baseline: Optional[str]):
    """Returns (feature source, name) for a checkpoint or a baseline."""
    if (checkpoint is None) == (baseline is None):
        raise UsageError("Pass exactly one of --checkpoint and --baseline.")
    if checkpoint is not None:
        loaded = load_checkpoint(checkpoint)
        return BackboneExtractor(loaded.backbone(), source=loaded.id), loaded.id
    if baseline == "hog":
        return HogExtractor(workers=max(1, run_config.workers)), "hog"
    name = f"random-{run_config.train.backbone}-seed{run_config.seed}"
    return BackboneExtractor(random_backbone(run_config.train.backbone, seed=run_config.seed), source=name), name


@click.group(cls=HeadcamGroup)
@click.option("--config", "path_config", type=click.Path(path_type=Path), default=None, help="YAML run config.")
@click.option("--output-dir", default=None, help="Directory receiving all outputs.")
@click.option("--seed", type=int, default=None, help="Run seed.")
@click.option("--workers", type=int, default=None, help="Parallel decoding and loading processes.")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), default="INFO")
@click.pass_context
def cli(ctx: click.Context, path_config, output_dir, seed, workers, log_level):
    """Self-supervised learning from longitudinal egocentric video."""
    logging.basicConfig(level=getattr(logging, log_level), format=LOG_FORMAT, force=True)
    ctx.obj = {
        "path_config": path_config,
        "overrides": {"output_dir": output_dir, "seed": seed, "workers": workers},
    }


@cli.command()
@click.option("--videos", type=click.Path(path_type=Path), default=None, help="Directory of recordings.")
@click.option("--fps", type=float, default=None)
@click.option("--segment-length", type=float, default=None, help="Temporal class duration in seconds.")
@click.option("--shard-size", type=int, default=None)
@click.option("--crop-shift", type=int, default=None)
@click.option("--stream-fps", type=float, default=None, help="Native rate of stored frame streams.")
@click.option("--reset-episodes-per-recording", is_flag=True)
@click.option("--drop-last-episode", is_flag=True)
@click.option("--annotations", type=click.Path(path_type=Path), default=None)
@click.option("--synonyms", type=click.Path(path_type=Path), default=None)
@click.option("--child-tag", default=None, help="Only ingest recordings of this child.")
@click.pass_context
def ingest(ctx, videos, fps, segment_length, shard_size, crop_shift, stream_fps, reset_episodes_per_recording,
           drop_last_episode, annotations, synonyms, child_tag):
    """Decode recordings into frame shards, a manifest and temporal classes."""
    run_config, dir_output = _prepare(
        ctx,
        {
            "data.videos_dir": str(videos) if videos else None,
            "data.fps": fps,
            "data.segment_length_s": segment_length,
            "data.shard_size": shard_size,
            "data.crop_shift": crop_shift,
            "data.stream_fps": stream_fps,
            "data.reset_episodes_per_recording": reset_episodes_per_recording or None,
            "data.drop_last_episode": drop_last_episode or None,
            "data.annotations": str(annotations) if annotations else None,
            "data.synonyms": str(synonyms) if synonyms else None,
            "data.child_tag": child_tag,
        },
    )
    data = run_config.data
    if data.videos_dir is None:
        raise UsageError("No recordings directory given (--videos or data.videos_dir).")
    recordings = discover_recordings(Path(data.videos_dir), child_tag=data.child_tag, stream_fps=data.stream_fps)
    manifest, labeling = ingest_recordings(recordings, data, dir_output, workers=max(1, run_config.workers))
    logger.info(f"Ingested {len(manifest)} frames in {labeling.n_classes} temporal classes into '{dir_output}'.")


@cli.command()
@click.argument("world", type=click.Choice(["episodic", "shapes"]))
@click.option("--n-episodes", type=int, default=None)
@click.option("--frames-per-episode", type=int, default=None)
@click.option("--drift-rate", type=float, default=None)
@click.option("--noise-sigma", type=float, default=None)
@click.option("--fps", type=float, default=None)
@click.option("--n-classes", type=int, default=None)
@click.option("--exemplars", type=int, default=None, help="Exemplars per class.")
@click.option("--views", type=int, default=None, help="Views per exemplar.")
@click.option("--image-size", type=int, default=None)
@click.option("--shard-size", type=int, default=None)
@click.pass_context
def synth(ctx, world, n_episodes, frames_per_episode, drift_rate, noise_sigma, fps, n_classes, exemplars, views,
          image_size, shard_size):
    """Generate a synthetic episodic or shape-world dataset."""
    overrides = {f"synth.{world}.image_size": image_size, "data.shard_size": shard_size}
    if world == "episodic":
        overrides.update({
            "synth.episodic.n_episodes": n_episodes,
            "synth.episodic.frames_per_episode": frames_per_episode,
            "synth.episodic.drift_rate": drift_rate,
            "synth.episodic.noise_sigma": noise_sigma,
            "synth.episodic.fps": fps,
        })
    else:
        overrides.update({
            "synth.shapes.n_classes": n_classes,
            "synth.shapes.exemplars_per_class": exemplars,
            "synth.shapes.views_per_exemplar": views,
        })
    run_config, dir_output = _prepare(ctx, overrides)
    if world == "episodic":
        frames, manifest, labeling = generate_episodic(run_config.synth.episodic)
    else:
        frames, manifest = generate_shapes(run_config.synth.shapes)
        labeling = None
    write_dataset(frames, manifest, dir_output, labeling=labeling, shard_size=run_config.data.shard_size)


@cli.command("train")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True, help="Output of ingest or synth.")
@click.option("--objective", type=click.Choice([str(objective) for objective in Objective]), default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--segment-length", type=float, default=None)
@click.option("--fps", type=float, default=None, help="Resample the frames to this rate first.")
@click.option("--backbone", default=None)
@click.option("--weights", type=click.Path(path_type=Path), default=None, help="Initial backbone weights.")
@click.option("--resume", type=click.Path(path_type=Path), default=None, help="Checkpoint to continue from.")
@click.pass_context
def train_command(ctx, data_dir, objective, lr, epochs, batch_size, segment_length, fps, backbone, weights, resume):
    """Train a backbone with one of the self-supervised objectives."""
    run_config, dir_output = _prepare(
        ctx,
        {
            "train.objective": objective,
            "train.lr": lr,
            "train.epochs": epochs,
            "train.batch_size": batch_size,
            "train.segment_length_s": segment_length,
            "train.fps": fps,
            "train.backbone": backbone,
            "train.weights": str(weights) if weights else None,
        },
    )
    config = run_config.train
    manifest, frames = _read_dataset(data_dir, labeled_only=False)
    if config.fps is not None and config.fps != manifest.fps:
        resampled = manifest.resample(config.fps)
        frames = frames[np.searchsorted(manifest.frame_ids, resampled.frame_ids)]
        manifest = resampled
    labeling = None
    if config.objective is Objective.TEMPORAL_CLASSIFICATION:
        labeling = assign_temporal_classes(
            manifest,
            segment_length_s=config.segment_length_s,
            reset_episodes_per_recording=run_config.data.reset_episodes_per_recording,
            drop_last_episode=run_config.data.drop_last_episode,
        )
    checkpoint = train(
        config, frames, manifest, labeling=labeling, dir_output=dir_output,
        resume=load_checkpoint(resume) if resume else None,
    )
    logger.info(f"Training finished after {checkpoint.epoch} epochs: {checkpoint.metrics}.")


@cli.command()
@click.option("--data-dir", type=click.Path(path_type=Path), default=None, help="Labeled dataset directory.")
@click.option("--image-folder", type=click.Path(path_type=Path), default=None, help="One sub-directory per class.")
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--baseline", type=click.Choice(["hog", "random"]), default=None)
@click.option("--split", "split_kind", type=click.Choice(["iid", "subsample", "exemplar"]), default=None)
@click.option("--factor", type=int, default=None, help="Subsample factor.")
@click.option("--train-fraction", type=float, default=None)
@click.option("--holdout", type=float, default=None, help="Held-out exemplars per class (count or fraction).")
@click.option("--uniform", is_flag=True, help="Unstratified iid splits.")
@click.option("--family", type=click.Choice(["logistic", "hinge"]), default=None)
@click.option("--binary", nargs=2, multiple=True, help="Additional two-class task, e.g. --binary car road.")
@click.pass_context
def probe(ctx, data_dir, image_folder, checkpoint, baseline, split_kind, factor, train_fraction, holdout, uniform,
          family, binary):
    """Fit linear probes on frozen features and write a results document."""
    run_config, dir_output = _prepare(
        ctx,
        {
            "probe.split.kind": split_kind,
            "probe.split.subsample_factor": factor,
            "probe.split.train_fraction": train_fraction,
            "probe.split.holdout_exemplars_per_class": holdout,
            "probe.split.stratified": False if uniform else None,
            "probe.family": family,
        },
    )
    source, name = _feature_source(run_config, checkpoint, baseline)
    embeddings, dataset_name = _labeled_embeddings(source, data_dir, image_folder, name)
    embeddings.save(dir_output / "embeddings.npz")
    results = [evaluate_probe(embeddings, run_config.split, run_config.probe, dataset_name=dataset_name)]
    for class_a, class_b in binary:
        task = binary_task(embeddings, class_a, class_b)
        results.append(
            evaluate_probe(task, run_config.split, run_config.probe, dataset_name=dataset_name,
                           task=f"{class_a}-vs-{class_b}")
        )
    write_results(results, dir_output / "results.yml")


@cli.group(cls=HeadcamGroup)
def analyze():
    """Representation analyses: selectivity, attention maps, dimensionality and factor sweeps."""


@analyze.command("csi")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--baseline", type=click.Choice(["random"]), default=None)
@click.option("--layer", "layers", multiple=True, help="Layer to analyze; repeatable, all layers by default.")
@click.option("--split-half", is_flag=True)
@click.option("--top-images", is_flag=True)
@click.pass_context
def analyze_csi(ctx, data_dir, checkpoint, baseline, layers, split_half, top_images):
    """Class selectivity of every feature of the requested layers."""
    run_config, dir_output = _prepare(
        ctx,
        {
            "analysis.layers": list(layers) or None,
            "analysis.csi_split_half": split_half or None,
            "analysis.top_images": top_images or None,
        },
    )
    analysis = run_config.analysis
    extractor, _ = _feature_source(run_config, checkpoint, baseline)
    manifest, frames = _read_dataset(data_dir, labeled_only=True)
    labels, _ = manifest.label_ids()
    tables = [
        feature_response_table(extractor, frames, labels, layer)
        for layer in (analysis.layers or extractor.backbone.layer_names)
    ]
    df_csi = csi_table(tables, split_half=analysis.csi_split_half, seed=run_config.seed)
    df_csi.write_csv(dir_output / "csi.csv")
    logger.info(f"Selectivity of {df_csi.height} features written to '{dir_output / 'csi.csv'}'.")
    if analysis.top_images:
        for table in tables:
            export_top_images(
                table, frames, dir_output / "top_images", n_features=analysis.top_features,
                sample_size=analysis.sample_size, top_k=analysis.top_k, seed=run_config.seed,
            ).write_csv(dir_output / "top_images" / f"{table.layer_id}_index.csv")


@analyze.command("cam")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True)
@click.option("--n-images", type=int, default=None)
@click.option("--class", "classes", multiple=True, help="Class to explain; repeatable, all classes by default.")
@click.option("--std-on-raw", is_flag=True)
@click.pass_context
def analyze_cam(ctx, data_dir, checkpoint, n_images, classes, std_on_raw):
    """Class activation maps of a probe fitted on the labeled frames."""
    run_config, dir_output = _prepare(
        ctx,
        {
            "analysis.cam_images": n_images,
            "analysis.cam_classes": list(classes) or None,
            "analysis.cam_std_on_raw": std_on_raw or None,
        },
    )
    analysis = run_config.analysis
    extractor, name = _feature_source(run_config, checkpoint, None)
    manifest, frames = _read_dataset(data_dir, labeled_only=True)
    labels, vocabulary = manifest.label_ids()
    embeddings = extract_embeddings(extractor, frames, labels=labels, frame_ids=manifest.frame_ids,
                                    vocabulary=vocabulary, name=name)
    classifier = fit_probe(embeddings, run_config.probe)
    class_names = list(analysis.cam_classes) or vocabulary
    unknown = [class_name for class_name in class_names if class_name not in vocabulary]
    if unknown:
        raise UsageError(f"Unknown class '{unknown[0]}', choose from {vocabulary}.")
    rng = np.random.default_rng(run_config.seed)
    rows = np.sort(rng.choice(len(frames), size=min(analysis.cam_images, len(frames)), replace=False))
    spatial = extractor.spatial_features(frames[rows])
    image_size = frames.shape[1]
    maps = [
        cam(spatial[i], classifier.class_weights(vocabulary.index(class_name)), size=image_size,
            std_on_raw=analysis.cam_std_on_raw, class_id=vocabulary.index(class_name), image_id=int(row))
        for i, row in enumerate(rows)
        for class_name in class_names
    ]
    export_attention_maps(maps, {int(row): frames[row] for row in rows}, dir_output / "attention")


@analyze.command("pca")
@click.option("--data-dir", type=click.Path(path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--baseline", type=click.Choice(["hog", "random"]), default=None)
@click.pass_context
def analyze_pca(ctx, data_dir, checkpoint, baseline):
    """Cumulative variance explained by the principal components of the embeddings."""
    run_config, dir_output = _prepare(ctx, {})
    source, name = _feature_source(run_config, checkpoint, baseline)
    manifest, frames = _read_dataset(data_dir, labeled_only=False)
    embeddings = extract_embeddings(source, frames, frame_ids=manifest.frame_ids, name=name)
    df_pca = pca_table(pca_curve(embeddings.embeddings, seed=run_config.seed), source=name)
    df_pca.write_csv(dir_output / "pca.csv")
    logger.info(f"PCA curve of '{name}' written to '{dir_output / 'pca.csv'}'.")


@analyze.command("sweep")
@click.option("--fps", "fps_values", type=float, multiple=True)
@click.option("--segment-length", "segment_lengths", type=float, multiple=True)
@click.option("--augment", "augment_values", type=bool, multiple=True)
@click.option("--sweep-seed", "seeds", type=int, multiple=True)
@click.pass_context
def analyze_sweep(ctx, fps_values, segment_lengths, augment_values, seeds):
    """Train and probe temporal classification over a grid of fps, segment length and augmentation."""
    run_config, dir_output = _prepare(
        ctx,
        {
            "analysis.sweep.fps_values": list(fps_values) or None,
            "analysis.sweep.segment_lengths": list(segment_lengths) or None,
            "analysis.sweep.augment_values": list(augment_values) or None,
            "analysis.sweep.seeds": list(seeds) or None,
        },
    )
    axes = run_config.analysis.sweep
    sweep_config = SweepConfig(
        fps_values=axes.fps_values,
        segment_lengths=axes.segment_lengths,
        augment_values=axes.augment_values,
        seeds=axes.seeds,
        world=run_config.synth.episodic,
        train=run_config.train,
        probe=run_config.probe,
    )
    run_sweep(sweep_config, path_output=dir_output / "sweep.csv")


@cli.command()
@click.option("--runs-dir", type=click.Path(path_type=Path), default=None, help="Directory searched for run outputs.")
@click.option("--no-plots", is_flag=True, help="Write tables only.")
@click.pass_context
def report(ctx, runs_dir, no_plots):
    """Combine run outputs into tables and HTML charts."""
    run_config, dir_output = _prepare(ctx, {})
    written = write_report(runs_dir or dir_output, dir_output / "report", plots=not no_plots)
    logger.info(f"Report with {len(written)} files written to '{dir_output / 'report'}'.")


if __name__ == "__main__":
    cli()
