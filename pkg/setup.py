#!/usr/bin/env python
# -*- encoding: utf-8 -*-
from setuptools import setup

setup(name='silicon-survey',
      version='0.1',
      description='LLM survey response simulation and alignment metrics',
      packages=['silicon_survey'],
      package_data={'silicon_survey': ['data/*']},
      python_requires='>=3.8',
      install_requires=[
          'click>=8.0',
          'httpx>=0.23',
          'numpy>=1.20',
          'pandas>=1.3',
          'pydantic>=2.0',
          'pyyaml>=5.4',
          'scipy>=1.7',
          'tenacity>=8.0',
          'tiktoken>=0.7',
      ],
      extras_require={
          'test': ['statsmodels>=0.13'],
      },
      entry_points={
          'console_scripts': ['silicon-survey = silicon_survey.cli:main'],
      },
)
