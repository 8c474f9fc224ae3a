"""
Masked examples and the difficulty curriculum
=============================================

Training examples are "bundles": the input list and the target list packed
into one token sequence with control tokens, plus parallel category /
position / segment channels. The input side gets light random corruption;
the target side hides a suffix whose length follows a difficulty schedule.
"""

import numpy as np

from listcont.corpus import ListPair, Vocabulary
from listcont.masker import MaskPolicy, build_bundle
from listcont.scheduler import make_schedule

vocab = Vocabulary(tokens=[f"song{i}" for i in range(12)],
                   frequencies=[24 - i for i in range(12)])
vocab.assign_categories(np.repeat(np.arange(3), 4), 3)
print(f"special ids: MASK={vocab.mask_id} CLS={vocab.cls_id} "
      f"SEP={vocab.sep_id} PAD={vocab.pad_id}")

pair = ListPair(input_items=(0, 4, 8, 1), target_items=(5, 9, 2))
policy = MaskPolicy()  # 15% of input positions; 80/10/10 mask/replace/keep
rng = np.random.default_rng(0)

# At low difficulty only the tail of the target is hidden; at 1.0 all of it.
for difficulty in (0.34, 0.67, 1.0):
    bundle = build_bundle(pair, policy, difficulty, vocab, rng)
    shown = ["MASK" if t == vocab.mask_id else str(t) for t in bundle.u]
    print(f"difficulty {difficulty:.2f}: u = {' '.join(shown)}  "
          f"labels at {bundle.label_positions.tolist()} -> {bundle.label_items.tolist()}")

# The step-wise schedule raises difficulty in equal units; the naive schedule
# trains at full difficulty from the first epoch.
for kind, steps in (("stepwise", 5), ("naive", 1)):
    schedule = make_schedule(kind, steps, 20)
    levels = [schedule.difficulty_at(e) for e in range(20)]
    print(f"{kind:9s}: {levels}")

# Unit boundaries are exact: 200 epochs over 5 steps is 40 epochs per level.
schedule = make_schedule("stepwise", 5, 200)
changes = [e for e in range(1, 200)
           if schedule.difficulty_at(e) != schedule.difficulty_at(e - 1)]
print(f"level changes at epochs {changes}; final difficulty "
      f"{schedule.difficulty_at(199)}")
