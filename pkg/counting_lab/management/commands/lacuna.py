from ._base import LabCommand


class Command(LabCommand):
    help = "Build the finite-rank lacuna at sampled radii and report its properties"
    stages = ('generate', 'subordination', 'noncondensing', 'lacuna')
