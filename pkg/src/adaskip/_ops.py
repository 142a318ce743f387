"""Op codes for the compiled network program.

A model is lowered to a flat "program": one row per op, executed in order by
whichever kernel backend is active.  Row layout (dtype np.intc, shape (n, 6)):

    kind, p0, p1, p2, p3, mask_index

AFFINE   : h <- h @ params[p0] + params[p1]           (p2, p3, mask unused: -1)
RESBLOCK : h <- h + relu(h @ params[p0] + params[p1]) @ params[p2] + params[p3]
           executed only when mask[mask_index] is set, otherwise the op is an
           exact identity (h passes through untouched).
"""

OP_AFFINE = 0
OP_RESBLOCK = 1

PROGRAM_COLUMNS = 6
