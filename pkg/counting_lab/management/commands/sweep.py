from ._base import LabCommand


class Command(LabCommand):
    help = "Sweep |n(r, A) - n(r, T)| over the r grid, fit C and C1, then check the growth exponent"
    stages = ('generate', 'subordination', 'noncondensing', 'sweep', 'corollary')
