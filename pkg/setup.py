#!/usr/bin/env python
# coding: utf-8

# Copyright 2022 by Leipzig University Library, http://ub.uni-leipzig.de
#                   JP Kanter, <kanter@ub.uni-leipzig.de>
#
# This file is part of the Msfed simulator.
#
# This program is free software: you can redistribute
# it and/or modify it under the terms of the GNU General Public
# License as published by the Free Software Foundation, either
# version 3 of the License, or (at your option) any later version.
#
# This program is distributed in the hope that it will
# be useful, but WITHOUT ANY WARRANTY; without even the implied warranty
# of MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with Msfed.  If not, see <http://www.gnu.org/licenses/>.
#
# @license GPL-3.0-only <https://www.gnu.org/licenses/gpl-3.0.en.html>

try:
    from setuptools import setup, find_packages
except ImportError:
    from distutils.core import setup

with open("README.md", "r") as readme:
    long_desc = readme.read()
    setup(
        name="Msfed",
        version="0.3",
        description="Simulator for federated averaging with several regional servers and overlapping coverage areas, with latency model and bound evaluation",
        author="JP Kanter",
        author_email="kanter@ub.uni-leipzig.de",
        long_description=long_desc,
        long_description_content_type="text/markdown",
        license="GPLv3",
        python_requires=">=3.8",
        zip_safe=False,
        include_package_data=True,
        packages=find_packages(exclude=["tests"]),
        package_data={'Msfed': ['MsfedSchema.json', 'presets/*.json']},
        entry_points={"console_scripts": ["msfed=Msfed.main:main"]},
        classifiers=[
                "Programming Language :: Python :: 3",
                "Programming Language :: Python :: 3.8",
                "Programming Language :: Python :: 3.9",
                "Environment :: Console",
                "Development Status :: 3 - Alpha",
                "License :: GPLv3",
                "Operating System :: OS Independent",
                "Intended Audience :: Science/Research",
                "Topic :: Scientific/Engineering"
            ],
        install_requires=[
            "numpy>=1.20",
            "scipy>=1.6",
            "python-dateutil",
            "jsonschema>=3.2.0",
        ],
        extras_require={"dev": [
                                "termcolor"
                                ]
                        }
    )
