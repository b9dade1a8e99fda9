from ._base import LabCommand


class Command(LabCommand):
    help = "Determinant bounds, winding numbers and the eigenvalue-count identity at sampled radii"
    stages = ('generate', 'subordination', 'noncondensing', 'lacuna', 'determinant')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--riesz', action='store_true', default=None,
                            help='Also compare Riesz projection ranks along T_r + tB')

    def overrides(self, options):
        return {**super().overrides(options), 'riesz': options.get('riesz')}
