"""
sparsecell
Main script: data preparation, masked pre-training, evaluation and cost analysis.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from evaluation import ABLATION_KINDS, ablation_harness, ablation_suite, summarize, train_variants
from expression import (
    DEFAULT_MIN_GENES,
    DEFAULT_TARGET_SUM,
    SparseExpressionMatrix,
    Stage,
    SyntheticSpec,
    kept_cell_indices,
    load_labels,
    load_matrix,
    normalize,
    quality_filter,
    save_labels,
    save_matrix,
    synthesize_dataset,
)
from flops import check_declared_parameters, efficiency_report, format_report, load_specs, report_frame
from masking import MaskConfig
from model import AutoDiscretizer, BackendFactory, ModelConfig, build_model, load_checkpoint
from scripts import ConfigError, RunConfig, RunExporter, ValidationError, derive_seed, load_config, setup_logging
from scripts.errors import EXIT_OK, exit_code_for
from training import FinetuneConfig, TrainConfig, finetune_annotation, pretrain, recovery_correlation

logger = logging.getLogger('sparsecell')

MODES = ['synthesize', 'prepare', 'pretrain', 'evaluate', 'finetune', 'ablation',
         'estimate-flops', 'weights-profile', 'list-backends']

# Keys a pre-training run cannot default
PRETRAIN_REQUIRED = ('training.learning_rate', 'training.batch_size')


def _run_config(config_path: str, required: Sequence[str] = ()) -> RunConfig:
    config = load_config(config_path)
    run_cfg = RunConfig.from_dict(config, required=required)
    setup_logging(run_cfg.logging)
    return run_cfg


def load_dataset(run_cfg: RunConfig) -> Tuple[SparseExpressionMatrix, Optional[List[str]]]:
    """
    Normalized matrix (and labels, when available) for a run.

    `data.matrix` points to a coordinate or dense CSV file; raw counts are
    quality-filtered and normalized on the fly. Without a matrix path, a
    synthetic dataset is generated from `data.synthetic`.
    """
    data = run_cfg.data
    min_genes = int(data.get('min_genes', DEFAULT_MIN_GENES))
    target_sum = float(data.get('target_sum', DEFAULT_TARGET_SUM))

    labels = None
    if data.get('matrix'):
        matrix = load_matrix(data['matrix'])
        if data.get('labels'):
            _, labels = load_labels(data['labels'])
    else:
        synthetic = {'seed': derive_seed(run_cfg.seed, 'data'), **(data.get('synthetic') or {})}
        spec = SyntheticSpec.from_dict(synthetic)
        matrix, labels = synthesize_dataset(spec)

    if labels is not None and len(labels) != matrix.n_cells:
        raise ValidationError(f"{len(labels)} labels for {matrix.n_cells} cells")

    if matrix.stage == Stage.RAW_COUNTS:
        keep = kept_cell_indices(matrix, min_genes)
        matrix = normalize(quality_filter(matrix, min_genes), target_sum)
        if labels is not None:
            labels = [labels[i] for i in keep]
    return matrix, labels


def _model_config(run_cfg: RunConfig, n_genes: int) -> ModelConfig:
    section = {'seed': derive_seed(run_cfg.seed, 'init'), 'n_genes': n_genes, **run_cfg.model}
    return ModelConfig.from_dict(section)


def _mask_config(run_cfg: RunConfig) -> MaskConfig:
    return MaskConfig.from_dict({'seed': derive_seed(run_cfg.seed, 'mask'), **run_cfg.masking})


def _train_config(run_cfg: RunConfig) -> TrainConfig:
    return TrainConfig.from_dict({'seed': run_cfg.seed, **run_cfg.training})


def mode_synthesize(config_path: Optional[str], out_dir: str):
    """Writes a synthetic raw count matrix and its labels."""
    print("\n=== MODE: Synthesize ===\n")
    section, seed = {}, 0
    if config_path and Path(config_path).exists():
        config = load_config(config_path)
        section = (config.get('data') or {}).get('synthetic') or {}
        seed = derive_seed(int((config.get('run') or {}).get('seed', 0)), 'data')
    spec = SyntheticSpec.from_dict({'seed': seed, **section})
    matrix, labels = synthesize_dataset(spec)

    out = Path(out_dir)
    matrix_path = save_matrix(matrix, out / 'raw_counts.txt')
    labels_path = save_labels([f"cell_{i}" for i in range(matrix.n_cells)], labels, out / 'labels.csv')
    print(f"Cells: {matrix.n_cells}, genes: {matrix.n_genes}, types: {len(set(labels))}")
    print(f"Sparsity: {matrix.sparsity:.3f}")
    print(f"Matrix: {matrix_path}")
    print(f"Labels: {labels_path}")


def mode_prepare(input_path: str, output_path: str, min_genes: int, target_sum: float,
                 labels_path: Optional[str] = None):
    """Quality control followed by normalization."""
    print("\n=== MODE: Prepare ===\n")
    raw = load_matrix(input_path, stage=Stage.RAW_COUNTS)
    filtered = quality_filter(raw, min_genes)
    normalized = normalize(filtered, target_sum)
    save_matrix(normalized, output_path)

    dropped = raw.n_cells - filtered.n_cells
    print(f"Cells kept: {filtered.n_cells}, dropped: {dropped} (min_genes={min_genes})")
    print(f"Normalized matrix: {output_path}")

    if labels_path:
        cell_ids, labels = load_labels(labels_path)
        keep = kept_cell_indices(raw, min_genes)
        out = Path(output_path)
        kept_path = save_labels([cell_ids[i] for i in keep], [labels[i] for i in keep],
                                out.with_name(f"{out.stem}_labels.csv"))
        print(f"Labels: {kept_path}")


def mode_pretrain(config_path: str):
    """Masked-value pre-training into <output_dir>/<run-name>/."""
    print("\n=== MODE: Pretrain ===\n")
    run_cfg = _run_config(config_path, PRETRAIN_REQUIRED)
    matrix, _ = load_dataset(run_cfg)
    model_cfg = _model_config(run_cfg, matrix.n_genes)
    mask_cfg = _mask_config(run_cfg)
    train_cfg = _train_config(run_cfg)

    exporter = RunExporter(str(run_cfg.run_dir))
    exporter.set_metadata({
        **run_cfg.to_dict(),
        'resolved': {'model': model_cfg.to_dict(), 'masking': mask_cfg.to_dict(), 'training': train_cfg.to_dict()},
        'dataset': {'n_cells': matrix.n_cells, 'n_genes': matrix.n_genes, 'sparsity': matrix.sparsity},
    })

    model = build_model(model_cfg)
    logger.info(f"Model: {model.count_parameters():,} parameters")
    result = pretrain(model, matrix, mask_cfg, train_cfg, exporter)

    exporter.add_result('initial_val_masked_mse', result.initial_val_mse)
    exporter.add_result('final_val_masked_mse', result.final_val_mse)
    exporter.add_result('steps', result.steps)
    exporter.add_result('split', result.split)
    held_out = result.held_out()
    if held_out:
        recovery = recovery_correlation(model, matrix, mask_cfg, held_out)
        exporter.add_result('recovery_pearson_r', recovery.r)
        exporter.save_table(recovery.to_frame(), 'recovery.csv')
    exporter.save_json()
    print(exporter.create_summary(result.checkpoint))


def _labelled_dataset(run_cfg: RunConfig) -> Tuple[SparseExpressionMatrix, List[str]]:
    matrix, labels = load_dataset(run_cfg)
    if labels is None:
        raise ConfigError('data.labels', "This mode needs cell labels ('data.labels' or synthetic data)")
    return matrix, labels


def mode_evaluate(config_path: str, checkpoints: Sequence[str], names: Optional[Sequence[str]] = None):
    """Clustering metrics of pooled embeddings, one row per checkpoint."""
    print("\n=== MODE: Evaluate ===\n")
    run_cfg = _run_config(config_path)
    matrix, labels = _labelled_dataset(run_cfg)
    if names and len(names) != len(checkpoints):
        raise ValidationError(f"{len(names)} names for {len(checkpoints)} checkpoints")

    variants = []
    for i, path in enumerate(checkpoints):
        model, _ = load_checkpoint(path)
        variants.append((names[i] if names else Path(path).stem, model))
    if not variants:
        variants.append(('untrained', build_model(_model_config(run_cfg, matrix.n_genes))))

    seed = derive_seed(run_cfg.seed, 'kmeans')
    table = ablation_harness(variants, matrix, labels, seed=seed,
                             batch_size=int(run_cfg.evaluation.get('batch_size', 64)))
    exporter = RunExporter(str(run_cfg.run_dir))
    path = exporter.save_table(table, run_cfg.evaluation.get('output', 'clustering.csv'))
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(f"\nMetrics: {path}")


def mode_finetune(config_path: str, checkpoint: Optional[str] = None):
    """Cell-type annotation head on top of a pre-trained (or fresh) trunk."""
    print("\n=== MODE: Finetune ===\n")
    run_cfg = _run_config(config_path)
    matrix, labels = _labelled_dataset(run_cfg)
    if checkpoint:
        model, _ = load_checkpoint(checkpoint)
    else:
        model = build_model(_model_config(run_cfg, matrix.n_genes))
        model.fit_value_encoder(matrix.values)

    cfg = FinetuneConfig.from_dict({'seed': run_cfg.seed, **(run_cfg.evaluation.get('annotation') or {})})
    result = finetune_annotation(model, matrix, labels, cfg)

    exporter = RunExporter(str(run_cfg.run_dir))
    exporter.set_metadata({**run_cfg.to_dict(), 'checkpoint': checkpoint})
    exporter.add_result('annotation', result.to_dict())
    exporter.save_json('annotation.json')
    print(f"Classes: {len(result.classes)}")
    print(f"Macro precision: {result.macro_precision:.4f}")
    print(f"Macro F1:        {result.macro_f1:.4f}")


def mode_ablation(config_path: str, kind: str, seeds: int):
    """Trains every variant of one ablation and compares clustering metrics."""
    print(f"\n=== MODE: Ablation ({kind}) ===\n")
    run_cfg = _run_config(config_path, PRETRAIN_REQUIRED)
    matrix, labels = _labelled_dataset(run_cfg)
    exporter = RunExporter(str(run_cfg.run_dir))

    tables = {}
    for offset in range(seeds):
        seed = run_cfg.seed + offset
        base = replace(_model_config(run_cfg, matrix.n_genes), seed=derive_seed(seed, 'init'))
        variants = ablation_suite(kind, base, _mask_config(run_cfg))
        train_cfg = TrainConfig.from_dict({**run_cfg.training, 'seed': seed})
        trained = train_variants(variants, matrix, train_cfg)
        table = ablation_harness(trained, matrix, labels, seed=derive_seed(seed, 'kmeans'))
        tables[f"seed{seed}"] = table.assign(seed=seed)

    exporter.save_table(pd.concat(tables.values(), ignore_index=True), f"ablation_{kind}.csv")
    summary = summarize(tables)
    exporter.save_table(summary, f"ablation_{kind}_summary.csv")
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))


def mode_estimate_flops(spec_path: str, out_dir: Optional[str], reference: Optional[str] = None):
    """FLOPs and parameter comparison of the architectures in a spec file."""
    print("\n=== MODE: Estimate FLOPs ===\n")
    specs = load_specs(spec_path)
    for spec in specs:
        check_declared_parameters(spec)
    reports = efficiency_report(specs, reference)
    text = format_report(reports)
    print(text)

    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_frame(reports).to_csv(out / 'flops.csv', index=False)
        (out / 'flops.txt').write_text(text + "\n", encoding='utf-8')
        print(f"\nReport: {out / 'flops.csv'}")


def weight_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive value grid start, start+step, ..., stop."""
    if step <= 0 or stop < start:
        raise ValidationError(f"Invalid grid {start}..{stop} step {step}")
    n = int(np.floor((stop - start) / step + 0.5)) + 1
    return start + step * np.arange(n)


def mode_weights_profile(checkpoint: Optional[str], start: float, stop: float, step: float,
                         out_path: str, bins: int = 100, seed: int = 0, plot: bool = False):
    """Bin weights of the auto-discretization block over a value grid."""
    print("\n=== MODE: Weights Profile ===\n")
    if checkpoint:
        model, _ = load_checkpoint(checkpoint)
        disc = model.value_encoder
        if not isinstance(disc, AutoDiscretizer):
            raise ValidationError(f"Checkpoint uses '{model.config.value_encoder}', not auto-discretization")
    else:
        torch.manual_seed(seed)
        disc = AutoDiscretizer(dim=8, config={'bins': bins})

    grid = weight_grid(start, stop, step)
    with torch.no_grad():
        weights = disc.bin_weights(torch.as_tensor(grid, dtype=torch.float32)).numpy()

    frame = pd.DataFrame(weights, columns=[f"bin_{j}" for j in range(weights.shape[1])])
    frame.insert(0, 'value', grid)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, float_format='%.8g')
    print(f"Grid: {len(grid)} values x {weights.shape[1]} bins")
    print(f"Weights: {out}")

    if plot:
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(8, 4))
        ax.stackplot(grid, weights.T)
        ax.set_xlabel('expression value')
        ax.set_ylabel('bin weight')
        ax.set_xlim(grid[0], grid[-1])
        ax.set_ylim(0, 1)
        fig.tight_layout()
        fig.savefig(out.with_suffix('.png'), dpi=120)
        plt.close(fig)
        print(f"Plot: {out.with_suffix('.png')}")


def mode_list_backends():
    """Lists registered attention backends and value encoders."""
    print("\n=== Available Backends ===\n")
    backends = BackendFactory.list_available_backends()
    print("Attention:")
    for name in backends['attention']:
        print(f"  - {name}")
    print("\nValue encoders:")
    for name in backends['value_encoder']:
        print(f"  - {name}")
    print("\nSelect them in config.yaml:")
    print("  model:")
    print("    attention_backend: linear_random_features")
    print("    value_encoder: auto_discretization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Masked pre-training on sparse single-cell expression matrices"
    )
    parser.add_argument(
        '--mode',
        type=str,
        choices=MODES,
        default='pretrain',
        help='Operation mode'
    )
    parser.add_argument('--config', type=str, default='config.yaml', help='Path to configuration file')
    parser.add_argument('--input', type=str, help='Raw matrix to prepare (prepare mode)')
    parser.add_argument('--output', type=str, help='Normalized matrix path (prepare mode)')
    parser.add_argument('--labels', type=str, help='Labels CSV carried through quality control (prepare mode)')
    parser.add_argument('--min-genes', type=int, default=DEFAULT_MIN_GENES,
                        help='Minimum expressed genes per cell (prepare mode)')
    parser.add_argument('--target-sum', type=float, default=DEFAULT_TARGET_SUM,
                        help='Library size after normalization (prepare mode)')
    parser.add_argument('--out', type=str,
                        help='Output directory (synthesize, estimate-flops) or CSV path (weights-profile)')
    parser.add_argument('--checkpoint', type=str, nargs='*', default=[],
                        help='Checkpoint file(s) (evaluate, finetune, weights-profile)')
    parser.add_argument('--names', type=str, nargs='*', help='Variant names for the checkpoints (evaluate mode)')
    parser.add_argument('--spec', type=str, default='flops_specs.yaml',
                        help='Architecture spec file (estimate-flops mode)')
    parser.add_argument('--reference', type=str, help='Reference architecture name (estimate-flops mode)')
    parser.add_argument('--ablation', type=str, default='binning',
                        choices=list(ABLATION_KINDS),
                        help='Which comparison to run (ablation mode)')
    parser.add_argument('--seeds', type=int, default=1, help='Number of paired seeds (ablation mode)')
    parser.add_argument('--start', type=float, default=0.0, help='Grid start (weights-profile mode)')
    parser.add_argument('--stop', type=float, default=10.0, help='Grid stop, inclusive (weights-profile mode)')
    parser.add_argument('--step', type=float, default=0.1, help='Grid step (weights-profile mode)')
    parser.add_argument('--bins', type=int, default=100,
                        help='Bins of a freshly initialized block when no checkpoint is given (weights-profile mode)')
    parser.add_argument('--seed', type=int, default=0, help='Initialization seed (weights-profile mode)')
    parser.add_argument('--plot', action='store_true', help='Also save a stacked-area plot (weights-profile mode)')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function. Returns the process exit code."""
    args = build_parser().parse_args(argv)
    if not logging.getLogger().handlers:
        setup_logging()

    try:
        if args.mode == 'list-backends':
            mode_list_backends()
        elif args.mode == 'synthesize':
            mode_synthesize(args.config, args.out or 'data/synthetic')
        elif args.mode == 'prepare':
            if args.input is None or args.output is None:
                raise ValidationError("prepare mode needs --input <raw matrix> and --output <path>")
            mode_prepare(args.input, args.output, args.min_genes, args.target_sum, args.labels)
        elif args.mode == 'pretrain':
            mode_pretrain(args.config)
        elif args.mode == 'evaluate':
            mode_evaluate(args.config, args.checkpoint, args.names)
        elif args.mode == 'finetune':
            mode_finetune(args.config, args.checkpoint[0] if args.checkpoint else None)
        elif args.mode == 'ablation':
            mode_ablation(args.config, args.ablation, args.seeds)
        elif args.mode == 'estimate-flops':
            mode_estimate_flops(args.spec, args.out, args.reference)
        elif args.mode == 'weights-profile':
            if args.out is None:
                raise ValidationError("weights-profile mode needs --out <csv path>")
            mode_weights_profile(args.checkpoint[0] if args.checkpoint else None, args.start, args.stop,
                                 args.step, args.out, args.bins, args.seed, args.plot)
    except FileNotFoundError as e:
        print(f"Error: File not found: {e.filename}")
        return exit_code_for(ValidationError(str(e)))
    except Exception as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}")
        return exit_code_for(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
