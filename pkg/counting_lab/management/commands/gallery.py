from ...gallery import KINDS
from ._base import LabCommand


class Command(LabCommand):
    help = "Generate a gallery operator and write its spectrum, perturbation and constants"
    stages = ('generate', 'subordination', 'noncondensing')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--singularity', default=None, choices=KINDS)
        parser.add_argument('--mapping', default=None, choices=['positive', 'symmetric'])

    def overrides(self, options):
        return {**super().overrides(options), 'singularity': options.get('singularity'),
                'mapping': options.get('mapping')}
