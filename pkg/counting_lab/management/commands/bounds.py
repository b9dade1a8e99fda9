from ._base import LabCommand


class Command(LabCommand):
    help = "Check the resolvent-sum bounds on strips, corrected strips and the parabola exterior"
    stages = ('generate', 'subordination', 'noncondensing', 'lacuna', 'bounds')
