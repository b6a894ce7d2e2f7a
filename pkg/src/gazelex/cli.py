"""Command-line interface.

Pipeline stages are separate subcommands so intermediate artifacts (traces,
datasets, checkpoints, reports) are plain files that can be inspected and
rerun independently.
"""

from __future__ import annotations

import json
import logging
import os

import click
import numpy as np

from . import __version__
from .alignment import AlignmentConfig, ReadingSession, read_dataset, smoothing_group_delay_ms, write_dataset
from .corpus import SubwordTokenizer, load_document, save_document, save_vocab
from .errors import TrainingDiverged
from .evalharness import run_protocol
from .knowledge import FrequencyTable, build_frequency_table
from .model import ModelConfig, load_checkpoint, save_checkpoint, train
from .pipeline import CorpusAssets, build_training_windows, score_session
from .signal import condition, read_trace, resample, smooth, write_trace
from .synthgen import DifficultyConfig, build_default_vocab, make_corpus

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(__version__)
@click.option("--verbose", is_flag=True, help="Enable info logging.")
def main(verbose):
    """Detect unknown words from webcam gaze traces and document text."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--window", default=50, show_default=True, help="Moving-average window (samples).")
@click.option("--rate", default=20.0, show_default=True, help="Resampling rate (Hz).")
@click.argument("src", type=click.Path(exists=True))
@click.argument("dst", type=click.Path())
def preprocess(window, rate, src, dst):
    """Denoise and uniformly resample a gaze trace file."""
    trace = read_trace(src)
    out = resample(smooth(trace, window), rate)
    write_trace(dst, out)
    click.echo(f"{len(trace)} samples -> {len(out)} at {rate} Hz")


@main.command()
@click.option("--docs", "docs_dir", required=True, type=click.Path(exists=True), help="Layout JSON directory.")
@click.option("--sessions", "sessions_file", required=True, type=click.Path(exists=True))
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--context-ms", default=1000.0, show_default=True)
@click.option("--neg-ratio", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--window", default=50, show_default=True, help="Smoothing window used for conditioning.")
@click.option("--rate", default=20.0, show_default=True, help="Resampling rate used for conditioning.")
@click.option("--gaze-lag-ms", default=-1.0, show_default=True,
              help="Gaze group-delay registration; negative = derive from the smoothing window and raw rate.")
@click.option("--n-gaze", default=20, show_default=True)
@click.option("--n-txt", default=64, show_default=True)
def align(docs_dir, sessions_file, traces_dir, out_file, context_ms, neg_ratio, seed,
          window, rate, gaze_lag_ms, n_gaze, n_txt):
    """Condition session traces and build the context-window dataset."""
    tokenizer = SubwordTokenizer.default()
    layouts = _load_layouts(docs_dir)
    assets = CorpusAssets(layouts, tokenizer)

    sessions = []
    lag = gaze_lag_ms
    with open(sessions_file, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            raw = read_trace(os.path.join(traces_dir, rec["trace_file"]))
            if lag < 0:
                gaps = np.diff(raw.times())
                lag = smoothing_group_delay_ms(window, 1000.0 / float(np.median(gaps)))
            sessions.append(
                ReadingSession(
                    doc_id=rec["doc_id"],
                    trace=condition(raw, window, rate),
                    t_start=float(rec["t_start"]),
                    t_end=float(rec["t_end"]),
                    marked_words=frozenset(int(w) for w in rec["marked_words"]),
                    user_id=rec.get("user_id", ""),
                )
            )
    config = AlignmentConfig(context_ms=context_ms, n_gaze=n_gaze, n_txt=n_txt, rate_hz=rate,
                             neg_ratio=neg_ratio, seed=seed, gaze_lag_ms=max(lag, 0.0))
    windows = build_training_windows(sessions, assets, config)
    write_dataset(out_file, windows)
    click.echo(f"wrote {len(windows)} windows to {out_file} (gaze lag {config.gaze_lag_ms:.0f} ms)")


@main.command()
@click.option("--freq-table", "freq_file", required=True, type=click.Path(),
              help="Frequency table JSON; built from the documents when missing.")
@click.option("--docs", "docs_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_file", default=None, type=click.Path(), help="Default: overwrite the dataset.")
@click.argument("dataset", type=click.Path(exists=True))
def features(freq_file, docs_dir, out_file, dataset):
    """Attach term-frequency, POS, and NER features to a dataset."""
    layouts = _load_layouts(docs_dir)
    if os.path.exists(freq_file):
        table = FrequencyTable.load(freq_file)
    else:
        table = build_frequency_table(list(layouts.values()))
        table.save(freq_file)
        click.echo(f"built frequency table over {len(layouts)} documents -> {freq_file}")
    assets = CorpusAssets(layouts, SubwordTokenizer.default(), freq_table=table)
    from .alignment import attach_knowledge

    windows = attach_knowledge(read_dataset(dataset), assets.features)
    write_dataset(out_file or dataset, windows)
    click.echo(f"featurized {len(windows)} windows")


@main.command(name="train")
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
@click.option("--data", "data_file", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--val-fraction", default=0.0, show_default=True)
def train_cmd(config_file, data_file, out_dir, val_fraction):
    """Train the detector; writes per-epoch checkpoints and final.npz."""
    config = _model_config(config_file)
    windows = read_dataset(data_file)
    val = None
    if val_fraction > 0:
        from .evalharness import split_random

        tr, te = split_random(len(windows), val_fraction, config.seed)
        val = [windows[i] for i in te]
        windows = [windows[i] for i in tr]
    try:
        params, metrics = train(windows, config, out_dir=out_dir, val_windows=val)
    except TrainingDiverged as exc:
        if exc.params is None:
            raise click.ClickException(str(exc))
        click.echo(f"warning: {exc}; keeping last good checkpoint", err=True)
        params, metrics = exc.params, exc.metrics or []
    save_checkpoint(os.path.join(out_dir, "final.npz"), params, config)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump(metrics, f, indent=2)
    click.echo(f"trained {config.epochs} epochs on {len(windows)} windows -> {out_dir}/final.npz")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--session", "trace_file", required=True, type=click.Path(exists=True), help="Raw trace JSONL.")
@click.option("--doc", "doc_file", required=True, type=click.Path(exists=True))
@click.option("--freq-table", "freq_file", default=None, type=click.Path(exists=True))
@click.option("--window", default=50, show_default=True)
@click.option("--rate", default=20.0, show_default=True)
@click.option("--out", "out_file", default=None, type=click.Path())
def predict(ckpt, trace_file, doc_file, freq_file, window, rate, out_file):
    """Score one reading session against a checkpoint."""
    params, config = load_checkpoint(ckpt)
    doc = load_document(doc_file)
    raw = read_trace(trace_file)
    table = FrequencyTable.load(freq_file) if freq_file else None
    assets = CorpusAssets({doc.doc_id: doc}, SubwordTokenizer.default(), freq_table=table)
    session = ReadingSession(
        doc_id=doc.doc_id,
        trace=condition(raw, window, rate),
        t_start=raw.t_start,
        t_end=raw.t_end,
        marked_words=frozenset(),
    )
    gaps = np.diff(raw.times())
    align_config = AlignmentConfig(
        n_gaze=config.n_gaze, n_txt=config.n_txt, rate_hz=rate,
        gaze_lag_ms=smoothing_group_delay_ms(window, 1000.0 / float(np.median(gaps))),
    )
    flagged = score_session(session, assets, params, config, align_config)
    result = [
        {"word": int(w), "text": doc.words[int(w)].text, "score": round(float(s), 6)}
        for w, s in sorted(flagged.items())
    ]
    payload = json.dumps({"doc_id": doc.doc_id, "predictions": result}, indent=2)
    if out_file:
        with open(out_file, "w", encoding="utf-8") as f:
            f.write(payload + "\n")
    click.echo(payload)


@main.command(name="eval")
@click.option("--protocol", type=click.Choice(["standard", "cross-user", "cross-doc"]), default="standard",
              show_default=True)
@click.option("--ablate", "ablate_block", type=click.Choice(["none", "context", "gaze", "knowledge"]),
              default="none", show_default=True)
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
@click.option("--data", "data_file", required=True, type=click.Path(exists=True))
@click.option("--group-size", default=3, show_default=True)
@click.option("--test-fraction", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_file", default=None, type=click.Path())
def eval_cmd(protocol, ablate_block, config_file, data_file, group_size, test_fraction, seed, out_file):
    """Run one evaluation protocol end to end and report P/R/F1."""
    config = _model_config(config_file)
    windows = read_dataset(data_file)
    report = run_protocol(
        windows, config, protocol=protocol,
        drop=None if ablate_block == "none" else ablate_block,
        group_size=group_size, test_fraction=test_fraction, seed=seed,
    )
    if out_file:
        report.save(out_file)
    click.echo(json.dumps({
        "protocol": protocol, "ablate": ablate_block,
        "precision": round(report.precision, 2), "recall": round(report.recall, 2),
        "f1": round(report.f1, 2), "token_accuracy": round(report.token_accuracy, 2),
    }, indent=2))


@main.command()
@click.option("--docs", "n_docs", default=36, show_default=True)
@click.option("--readers", "n_readers", default=12, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--gaze-only", is_flag=True, help="Distractors share frequency/POS/NER; signal only in dwell.")
@click.option("--words-per-doc", default=150, show_default=True)
def synth(n_docs, n_readers, seed, out_dir, gaze_only, words_per_doc):
    """Generate a synthetic corpus: layouts, raw traces, session metadata."""
    difficulty = DifficultyConfig(gaze_only=gaze_only, words_per_doc=words_per_doc)
    corpus = make_corpus(n_docs, n_readers, difficulty, seed)
    docs_dir = os.path.join(out_dir, "docs")
    traces_dir = os.path.join(out_dir, "traces")
    os.makedirs(docs_dir, exist_ok=True)
    os.makedirs(traces_dir, exist_ok=True)
    for doc_id, doc in sorted(corpus.docs.items()):
        save_document(os.path.join(docs_dir, f"{doc_id}.json"), doc)
    sessions_path = os.path.join(out_dir, "sessions.jsonl")
    with open(sessions_path, "w", encoding="utf-8") as f:
        for s in corpus.sessions:
            trace_file = f"{s.raw_trace.session_id}.jsonl"
            write_trace(os.path.join(traces_dir, trace_file), s.raw_trace)
            f.write(json.dumps({
                "session_id": s.raw_trace.session_id,
                "user_id": s.reader_id,
                "doc_id": s.doc_id,
                "t_start": s.t_start,
                "t_end": s.t_end,
                "marked_words": sorted(s.marked_words),
                "trace_file": trace_file,
            }, separators=(",", ":")) + "\n")
    with open(os.path.join(out_dir, "profiles.json"), "w", encoding="utf-8") as f:
        json.dump([
            {"reader_id": p.reader_id, "unknown_vocab": sorted(p.unknown_vocab),
             "base_dwell_ms": p.base_dwell_ms, "dwell_multiplier_unknown": p.dwell_multiplier_unknown,
             "p_regression": p.p_regression, "noise_sigma_px": p.noise_sigma_px}
            for p in corpus.profiles
        ], f, indent=2)
    click.echo(f"{len(corpus.docs)} docs, {len(corpus.profiles)} readers, {len(corpus.sessions)} sessions -> {out_dir}")


@main.command()
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
def serve(config_file):
    """Run the reading-session HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(config_file)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)


@main.command(name="build-vocab")
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--size", default=8192, show_default=True)
def build_vocab(out_file, size):
    """Retrain the default sub-word vocabulary from the synthetic word bank."""
    vocab = build_default_vocab(size)
    save_vocab(out_file, vocab)
    click.echo(f"wrote {len(vocab)} tokens to {out_file}")


def _load_layouts(docs_dir):
    layouts = {}
    for name in sorted(os.listdir(docs_dir)):
        if name.endswith(".json"):
            doc = load_document(os.path.join(docs_dir, name))
            layouts[doc.doc_id] = doc
    if not layouts:
        raise click.ClickException(f"no layout files in {docs_dir}")
    return layouts


def _model_config(config_file) -> ModelConfig:
    if config_file is None:
        return ModelConfig()
    with open(config_file, "r", encoding="utf-8") as f:
        return ModelConfig.from_dict(json.load(f))


if __name__ == "__main__":
    main()
