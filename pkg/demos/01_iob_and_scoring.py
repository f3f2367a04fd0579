"""IOB label machinery and phrase-level scoring, end to end.

Walks through: parsing a CoNLL snippet, extracting entity spans, repairing
inconsistent per-token model output, converting between IOB1 and IOB2, and
scoring predictions against gold with the conlleval-style report.
"""

import io

from seqtag.corpus import (convert_scheme, extract_spans, read_conll,
                           repair_iob, spans_to_labels)
from seqtag.eval import render, score

# A two-sentence corpus in CoNLL format: surface, POS, chunk, NE label.
SNIPPET = """\
Nguyễn_Văn_An Np B-NP B-PER
thăm V B-VP O
Thành_phố N B-NP B-LOC
Hồ_Chí_Minh Np I-NP I-LOC
. CH O O

công_ty N B-NP O
Vinamilk Np I-NP B-ORG
tuyển V B-VP O
nhân_viên N B-NP O
. CH O O
"""

sentences = read_conll(io.StringIO(SNIPPET))
print(f"parsed {len(sentences)} sentences")

# Spans are maximal B-X (I-X)* runs; the span is the unit every score is
# computed over.
for sent in sentences:
    spans = extract_spans(sent.gold_labels())
    print(" ", [(s.entity_type, s.start, s.end) for s in spans])

# Span extraction and label emission are inverses.
labels = sentences[0].gold_labels()
assert spans_to_labels(extract_spans(labels), len(labels)) == labels

# A per-token softmax classifier can emit I- labels with no entity open.
# repair_iob turns any such dangling I-X into B-X and never touches valid
# sequences.
broken = ["O", "I-PER", "I-PER", "O", "I-LOC"]
print("\nbroken :", broken)
print("repaired:", repair_iob(broken))

# IOB1 marks entity starts with I- unless the previous entity had the same
# type; IOB2 always uses B-. Conversion preserves the span set exactly.
iob1 = ["I-PER", "I-PER", "B-PER", "O"]
iob2 = convert_scheme(iob1, "IOB1", "IOB2")
print("\nIOB1:", iob1)
print("IOB2:", iob2)
assert convert_scheme(iob2, "IOB2", "IOB1") == iob1

# Scoring: a predicted span counts only on an exact (type, start, end)
# match. The second prediction below gets the boundary wrong and scores
# zero for that entity.
for tok, pred in zip(sentences[0], ["B-PER", "O", "B-LOC", "O", "O"]):
    tok.predicted_label = pred
for tok, pred in zip(sentences[1], ["O", "B-ORG", "O", "O", "O"]):
    tok.predicted_label = pred

print()
print(render(score(sentences)), end="")
