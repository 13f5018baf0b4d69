# %% [markdown]
# # Carrying the network across recordings
# With incremental transfer the first recording trains a seed network and
# every later recording fine-tunes the current one.  Fine-tuning starts
# from useful hidden layers, so it converges in fewer epochs.

# %%
import tempfile

from ibdiar.pipeline import PipelineConfig, System, run_system, run_tpib_itl, run_tpib_itl_frozen
from ibdiar.scoring import relative_improvement
from ibdiar.synth import SynthSpec, make_corpus
from ibdiar.transfer import TransferState

corpus = list(make_corpus(5, SynthSpec(total_duration_s=120), "itl", speaker_range=(2, 3), seed=12))

# %%
_, tpib = run_system(corpus, PipelineConfig(system=System.TPIB))
state = TransferState()
_, itl = run_tpib_itl(corpus, state, PipelineConfig(system=System.TPIB_ITL))
for a, b in zip(tpib.entries, itl.entries):
    print(f"{a.recording_id}: epochs {a.ann_epochs:3d} vs {b.ann_epochs:3d}   "
          f"ANN {a.stage_times['ann_training']:.2f} s vs {b.stage_times['ann_training']:.2f} s")
print(f"RTF {tpib.rtf:.4f} -> {itl.rtf:.4f}, improvement {relative_improvement(tpib.rtf, itl.rtf):.1f}%")

# %% The store keeps every checkpoint and an append-only history
for h in state.history:
    print(h.recording_id, h.checkpoint_id, h.epochs, "committed" if h.committed else "logged")
with tempfile.TemporaryDirectory() as d:
    state.save(d)
    print("reloaded history length:", len(TransferState.load(d).history))

# %% [markdown]
# Frozen mode adapts over a development set only.  Each test recording
# then fine-tunes from the same checkpoint, so test order is irrelevant.

# %%
dev, test = corpus[:3], corpus[3:]
hyps, rep = run_tpib_itl_frozen(dev, test, PipelineConfig(system=System.TPIB_ITL_FROZEN))
print("frozen checkpoint:", rep.state.current.id)
print([(e.recording_id, e.phase, round(e.score.ser_pct, 2)) for e in rep.entries])
