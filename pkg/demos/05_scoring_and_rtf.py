# %% [markdown]
# # Scoring a hypothesis
# Speaker error is computed after the best one-to-one mapping between
# hypothesis clusters and reference speakers, ignoring 0.25 s around every
# reference boundary.

# %%
from ibdiar.annotation import DiarizationHypothesis, ReferenceAnnotation, Turn
from ibdiar.scoring import measure_rtf, score

ref = ReferenceAnnotation("call", [Turn(0, 10, "alice"), Turn(10, 20, "bob"), Turn(20, 30, "alice")])
hyp = DiarizationHypothesis("call", [Turn(0, 11, "c1"), Turn(11, 19, "c2"), Turn(19, 28, "c1")])

# %%
s = score(hyp, ref, collar_s=0.25)
print(f"MS {s.ms_pct:.2f}%  FA {s.fa_pct:.2f}%  SER {s.ser_pct:.2f}%  DER {s.der_pct:.2f}%")
print("mapping:", s.mapping, " speaker count error:", s.speaker_count_error)

# %% A wider collar forgives more of the boundary mistakes
for c in (0.0, 0.25, 1.0):
    print(f"collar {c:4.2f} s: error {score(hyp, ref, c).error_s:.2f} s")

# %% [markdown]
# Real-time factor is processing time over audio duration, per stage and
# in total.

# %%
rtf = measure_rtf({"ib_first_pass": 0.6, "ann_training": 1.8, "ib_second_pass": 0.5}, duration_s=120.0)
print(rtf.to_dict())
