"""
Command line for sketch diffusion

Subcommands:
    gen-data    synthetic corpus to JSONL
    preprocess  normalize, deduplicate and size-filter a corpus
    train       train a denoiser checkpoint
    sample      generate sketches from a checkpoint or the oracle denoiser
    render      JSONL to one SVG file per sketch
    curves      argmax retention curves of the discrete schedules as CSV
    verify      run the test suites

Every artifact-producing command writes one run manifest beside its
outputs. Exit codes: 0 success, 1 invalid input or I/O failure, 2 failed
verification.

@version: v0.1.0
"""

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from denoiser.checkpoint import load_checkpoint, save_checkpoint
from denoiser.denoiser_network import TorchDenoiser
from denoiser.denoiser_training import TrainConfig, TrainingDivergedError, train
from diffusion.joint_diffusion import DiffusionConfig, sample_sketches
from factory import DiffusionFactory
from schedules.variance_schedule import estimate_retention, retention_target
from sketches.sketch_io import read_records, write_records
from sketches.sketch_model import (
    DegenerateSketchError,
    SketchRecord,
    dedup_records,
    encode_sketch,
    filter_by_size,
    gen_synthetic,
    normalize_sketch,
)
from sketches.sketch_svg import RenderOptions, render_svg

__version__ = '0.1.0'

logger = logging.getLogger('sketchdnn')

MANIFEST_SUFFIX = '.manifest.json'
DIR_MANIFEST_NAME = 'manifest.json'
VERIFY_TARGETS = ('simplex', 'schedules', 'diffusion', 'sketches', 'denoiser', 'test_factory.py',
                  'test_sketchdnn_cli.py')


class VerificationFailed(Exception):
    """Raised when the verification suites report failures"""
    pass


class UsageError(ValueError):
    """Raised for malformed command lines"""

    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class SketchArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit through main with code 1"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}", self.format_usage())


@dataclass
class RunManifest:
    """
    Record of one command invocation

    Args:
        command: subcommand name
        config: merged configuration the command ran with
        seed: seed the outputs derive from (None when unseeded)
        inputs: input paths
        outputs: output paths
        wall_clock_s: run time in seconds
        version: library version
    """
    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    wall_clock_s: float = 0.0
    version: str = __version__

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + '\n', encoding='utf-8')
        logger.debug("wrote manifest %s", path)
        return path


def manifest_path(out: Path) -> Path:
    """Manifest location for an output file or directory"""
    if out.is_dir():
        return out / DIR_MANIFEST_NAME
    return out.with_name(out.name + MANIFEST_SUFFIX)


def _progress_enabled(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _load_json_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding='utf-8'))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _split_config(merged: Dict[str, Any]) -> Tuple[DiffusionConfig, TrainConfig]:
    """Split flat key-value config into DiffusionConfig and TrainConfig"""
    diffusion_keys = {f.name for f in fields(DiffusionConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(merged) - diffusion_keys - train_keys
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    diffusion = DiffusionConfig(**{k: v for k, v in merged.items() if k in diffusion_keys})
    training = TrainConfig(**{k: v for k, v in merged.items() if k in train_keys})
    return diffusion, training


def _render_all(records: Sequence[SketchRecord], out_dir: Path, seed: int) -> List[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    options = RenderOptions(seed=seed)
    written = []
    for rec in records:
        path = out_dir / f"{rec.id}.svg"
        path.write_text(render_svg(rec, options), encoding='utf-8')
        written.append(str(path))
    return written


def cmd_gen_data(args: argparse.Namespace) -> RunManifest:
    out = Path(args.out)
    records = gen_synthetic(args.count, seed=args.seed)
    count = write_records(out, records)
    logger.info("wrote %d synthetic sketches to %s", count, out)
    return RunManifest('gen-data', {'count': args.count}, args.seed, [], [str(out)])


def cmd_preprocess(args: argparse.Namespace) -> RunManifest:
    src, out = Path(args.input), Path(args.out)
    records = read_records(src)
    normalized = []
    for rec in records:
        try:
            normalized.append(normalize_sketch(rec))
        except DegenerateSketchError as e:
            logger.warning("dropping %s: %s", rec.id, e)
    unique, duplicates = dedup_records(normalized)
    kept = filter_by_size(unique, args.min_primitives, args.max_primitives)
    write_records(out, kept)
    print(f"{len(unique)} unique ({duplicates} duplicates removed), {len(kept)} kept")
    logger.info("preprocessed %d records: %d unique, %d kept", len(records), len(unique), len(kept))
    config = {'min_primitives': args.min_primitives, 'max_primitives': args.max_primitives,
              'records': len(records), 'unique': len(unique), 'duplicates': duplicates, 'kept': len(kept)}
    return RunManifest('preprocess', config, None, [str(src)], [str(out)])


def cmd_train(args: argparse.Namespace) -> RunManifest:
    data, out = Path(args.data), Path(args.out)
    merged = _load_json_config(args.config)
    for key in ('T', 'k', 'discrete_schedule', 'epochs', 'batch_size', 'learning_rate', 'lam', 'seed',
                'width', 'depth', 'heads', 'positional'):
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    diffusion, training = _split_config(merged)
    records = read_records(data)
    corpus = [encode_sketch(rec, diffusion.k, diffusion.n_max) for rec in records]
    result = train(corpus, training, diffusion, checkpoint_path=out, progress=_progress_enabled(args))
    config = {'diffusion': asdict(diffusion), 'train': training.to_dict()}
    save_checkpoint(out, result.model, config, training.seed)
    if result.history:
        logger.info("final epoch loss %.6f", result.history[-1])
    config['final_loss'] = result.history[-1] if result.history else None
    return RunManifest('train', config, training.seed, [str(data)], [str(out)])


def cmd_sample(args: argparse.Namespace) -> RunManifest:
    out = Path(args.out)
    inputs = []
    if args.ckpt is not None:
        model, header = load_checkpoint(args.ckpt)
        if 'diffusion' not in header['config']:
            raise ValueError(f"{args.ckpt}: checkpoint records no diffusion config")
        diffusion = DiffusionConfig(**header['config']['diffusion'])
        denoiser = TorchDenoiser(model)
        inputs.append(args.ckpt)
    else:
        if args.data is None:
            raise ValueError("--oracle needs --data with the sketch to reconstruct")
        matches = [rec for rec in read_records(args.data) if rec.id == args.oracle]
        if not matches:
            raise ValueError(f"no sketch with id {args.oracle!r} in {args.data}")
        diffusion = DiffusionConfig(T=args.T, k=args.k)
        x0 = encode_sketch(matches[0], diffusion.k, diffusion.n_max)
        denoiser = DiffusionFactory.create_denoiser('oracle', x0=x0, k=diffusion.k)
        inputs.append(args.data)

    samples = sample_sketches(denoiser, diffusion, args.count, seed=args.seed,
                              progress=_progress_enabled(args))
    write_records(out, samples)
    outputs = [str(out)]
    if args.svg_dir is not None:
        outputs.extend(_render_all(samples, Path(args.svg_dir), args.seed))
    logger.info("wrote %d samples to %s", len(samples), out)
    config = {'diffusion': asdict(diffusion), 'count': args.count, 'oracle': args.oracle}
    return RunManifest('sample', config, args.seed, inputs, outputs)


def cmd_render(args: argparse.Namespace) -> RunManifest:
    src, out = Path(args.input), Path(args.out)
    written = _render_all(read_records(src), out, args.seed)
    logger.info("rendered %d sketches to %s", len(written), out)
    return RunManifest('render', {}, args.seed, [str(src)], written)


def cmd_curves(args: argparse.Namespace) -> RunManifest:
    out = Path(args.out)
    raw = DiffusionFactory.create_schedule('cosine', args.T, args.k)
    kinds = ['augmented', 'calibrated'] if args.calibrated else ['augmented']
    schedules = {kind: DiffusionFactory.create_schedule(kind, args.T, args.k, args.D) for kind in kinds}
    progress = _progress_enabled(args)
    retention = {'raw': estimate_retention(raw, args.D, args.trials, args.seed, args.workers, progress)}
    for kind, sched in schedules.items():
        retention[kind] = estimate_retention(sched, args.D, args.trials, args.seed, args.workers, progress)
    target = retention_target(raw, args.D)

    columns = ['t', 'raw_alpha_bar'] + kinds + ['retention_raw'] + [f'retention_{kind}' for kind in kinds]
    columns.append('target')
    with out.open('w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for t in range(args.T + 1):
            row = [t, repr(float(raw.alpha_bar[t]))]
            row += [repr(float(schedules[kind].alpha_bar[t])) for kind in kinds]
            row.append(repr(retention['raw'][t][1]))
            row += [repr(retention[kind][t][1]) for kind in kinds]
            row.append(repr(float(target[t])))
            writer.writerow(row)
    logger.info("wrote retention curves for T=%d D=%d to %s", args.T, args.D, out)
    config = {'T': args.T, 'D': args.D, 'k': args.k, 'trials': args.trials, 'calibrated': args.calibrated}
    return RunManifest('curves', config, args.seed, [], [str(out)])


def cmd_verify(args: argparse.Namespace) -> None:
    import pytest

    root = Path(__file__).resolve().parent
    pytest_args = [str(root / target) for target in VERIFY_TARGETS] + ['-q', '-p', 'no:cacheprovider']
    if args.suite == 'fast':
        pytest_args += ['-m', 'not slow']
    logger.info("running %s suite under %s", args.suite, root)
    code = pytest.main(pytest_args)
    if code != 0:
        raise VerificationFailed(f"{args.suite} suite failed with pytest exit code {int(code)}")


COMMANDS = {
    'gen-data': cmd_gen_data,
    'preprocess': cmd_preprocess,
    'train': cmd_train,
    'sample': cmd_sample,
    'render': cmd_render,
    'curves': cmd_curves,
    'verify': cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = SketchArgumentParser(prog='sketchdnn', description=__doc__.split('\n\n')[0].strip())
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    noise.add_argument('-q', '--quiet', action='store_true', help='warnings only, no progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-data', help='generate a synthetic corpus')
    p.add_argument('--count', type=int, required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)

    p = sub.add_parser('preprocess', help='normalize, deduplicate and filter a corpus')
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--min-primitives', type=int, default=8)
    p.add_argument('--max-primitives', type=int, default=16)

    p = sub.add_parser('train', help='train a denoiser')
    p.add_argument('--data', required=True)
    p.add_argument('--config', help='JSON key-value config; flags override its values')
    p.add_argument('--out', required=True)
    p.add_argument('--T', type=int)
    p.add_argument('--k', type=float)
    p.add_argument('--discrete-schedule', dest='discrete_schedule', choices=['augmented', 'calibrated', 'raw'])
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', dest='batch_size', type=int)
    p.add_argument('--learning-rate', dest='learning_rate', type=float)
    p.add_argument('--lam', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--width', type=int)
    p.add_argument('--depth', type=int)
    p.add_argument('--heads', type=int)
    p.add_argument('--positional', action='store_true', default=None,
                   help='add row-index encodings (breaks permutation equivariance)')

    p = sub.add_parser('sample', help='generate sketches')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--ckpt')
    source.add_argument('--oracle', metavar='SKETCH_ID')
    p.add_argument('--data', help='corpus holding the --oracle sketch')
    p.add_argument('--count', type=int, default=1)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--T', type=int, default=100, help='timesteps in oracle mode')
    p.add_argument('--k', type=float, default=0.99, help='label smoothing in oracle mode')
    p.add_argument('--out', required=True)
    p.add_argument('--svg-dir', dest='svg_dir')

    p = sub.add_parser('render', help='render sketches as SVG')
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--out', required=True, help='output directory')
    p.add_argument('--seed', type=int, default=0, help='colour seed')

    p = sub.add_parser('curves', help='retention curves as CSV')
    p.add_argument('--T', type=int, default=100)
    p.add_argument('--D', type=int, default=5)
    p.add_argument('--k', type=float, default=0.99)
    p.add_argument('--trials', type=int, default=100000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--workers', type=int)
    p.add_argument('--calibrated', action='store_true', help='add calibrated schedule columns')
    p.add_argument('--out', required=True)

    p = sub.add_parser('verify', help='run the test suites')
    p.add_argument('--suite', choices=['all', 'fast'], default='all')
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s', force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e.usage, end='', file=sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 1
    configure_logging(args.verbose, args.quiet)
    started = time.perf_counter()
    try:
        manifest = COMMANDS[args.command](args)
    except VerificationFailed as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, TrainingDivergedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if manifest is not None:
        manifest.wall_clock_s = round(time.perf_counter() - started, 3)
        manifest.write(manifest_path(Path(args.out)))
    return 0


if __name__ == '__main__':
    sys.exit(main())
