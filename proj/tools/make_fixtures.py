#!/usr/bin/env python3
"""Builds the maze bundles under fixtures/ from the ASCII layouts below.

Layout legend (one character = 0.5 m, rasterised at 0.1 m per cell):
  '#'  wall            ' ' or '.'  floor
  'S'  start           'G'  goal
  '1'-'9'  subtask hints, in order; subtasks past the last hint aim at G.
           The layouts below use none, so every subtask aims at G.
  'a'-'z'  objects, labelled through the maze's "objects" table

Regions are rectangles given in character coordinates (col0, row0, col1, row1),
inclusive. Run from the repository root: python3 tools/make_fixtures.py
"""

import json
import math
from pathlib import Path

import numpy as np

CHAR_M = 0.5
SCALE = 5
CELL = CHAR_M / SCALE

MAZES = {}


def maze(name, layout, instruction, yaw=0.0, objects=None, regions=None):
    MAZES[name] = dict(layout=layout.strip("\n"), instruction=instruction, yaw=yaw,
                       objects=objects or {}, regions=regions or [])


maze("m01_corridor", """
#############################
#S                   p     G#
#                           #
#                           #
#############################
""", "Walk straight down the hallway. Stop next to the plant at the end.",
     objects={"p": "plant"}, regions=[("hallway", 1, 1, 27, 3)])

maze("m02_left_turn", """
################
#          G   #
#              #
#              #
#######   ######
      #   #
      #   #
      #   #
      #   #
      # S #
      #####
""", "Go up the corridor. Turn left into the hall and stop there.", yaw=90.0,
     regions=[("corridor", 7, 4, 9, 9), ("hall", 1, 1, 14, 3)])

maze("m03_right_turn", """
###########
#S        #####
#              #
#              #
########       #
       #       #
       #      G#
       #########
""", "Head east to the corner. Then go south into the room.",
     regions=[("room", 8, 4, 14, 6)])

maze("m04_u_turn", """
##############
#S           #
#            #
#            #
#########    #
#            #
#G           #
#            #
##############
""", "Walk to the far end of the hall. Come back along the lower passage.",
     regions=[("upper hall", 1, 1, 12, 3), ("lower passage", 1, 5, 12, 7)])

maze("m05_room_door", """
#################
#       #       #
#  S    #    G  #
#               #
#               #
#       #       #
#################
""", "Leave the bedroom through the doorway. Enter the study and stop.",
     objects={}, regions=[("bedroom", 1, 1, 7, 5), ("study", 9, 1, 15, 5)])

maze("m06_zigzag", """
#############
#S      #####
#        ####
#        ####
#####     ###
#####     ###
#####     ###
#####        #
#####       G#
#####        #
##############
""", "Go east. Turn south through the middle. Step into the corner nook.",
     regions=[("nook", 10, 7, 12, 9)])

maze("m07_t_junction", """
#####################
#G                  #
#                   #
#                   #
########     ########
       #     #
       #     #
       #  S  #
       #######
""", "Walk north to the junction. Turn left and go to the end of the hall.", yaw=90.0,
     objects={"c": "chair"}, regions=[("junction", 8, 1, 12, 4)])

maze("m08_kitchen", """
##################
#S   #           #
#    #     k     #
#                #
#                #
#    #          G#
#    #           #
##################
""", "Walk through the opening on the right. Cross the kitchen to the fridge.",
     objects={"k": "table"}, regions=[("kitchen", 6, 1, 16, 6)])

maze("m09_long_l", """
###############################
#S                            #
#                             #
#                             #
##########################    #
                         #    #
                         #    #
                         #   G#
                         ######
""", "Follow the long hallway east. Turn south at the end and stop.")

maze("m10_two_rooms", """
####################
#           #      #
#    S             #
#               G  #
#                  #
#           #      #
####################
""", "Walk to the door on the east side. Go into the small room.",
     regions=[("living room", 1, 1, 11, 5), ("small room", 13, 1, 18, 5)])

maze("m11_pillar", """
###################
#                 #
#  S    ###    G  #
#       ###       #
#                 #
###################
""", "Go around the pillar. Stop on the other side.",
     objects={})

maze("m12_diagonal_room", """
##################
#               G#
#                #
#                #
#                #
#                #
#S               #
##################
""", "Cross the open hall to the far corner.", yaw=30.0)

maze("m13_dead_end_choice", """
#################
#######   #######
#######   #######
#######  G#######
#######   #######
#               #
#S              #
#               #
#################
""", "Walk along the lower hall. Turn north into the alcove.", regions=[("alcove", 7, 1, 9, 4)])

maze("m14_s_bend", """
##############
#S        ####
#         ####
####      ####
####      ####
####         #
####         #
#########   G#
##############
""", "Go east. Take the bend south. Continue to the corner.")

maze("m15_lobby", """
########################
#                      #
#   l                  #
#         S            #
#                      #
#                 G    #
#                      #
########################
""", "Cross the lobby to the lamp on the far side.", yaw=180.0,
     objects={"l": "lamp"}, regions=[("lobby", 1, 1, 22, 6)])

maze("m16_step_back", """
#############
#           #
#   G       #
#           #
#        S  #
#           #
#############
""", "Turn around. Walk to the desk.", yaw=0.0,
     objects={})

maze("m17_corridor_rooms", """
#########################
#     #         #       #
#  S                G   #
#     #         #       #
#########################
""", "Leave the office. Go through the hallway. Enter the last room.",
     regions=[("office", 1, 1, 5, 3), ("hallway", 7, 1, 15, 3), ("last room", 17, 1, 23, 3)])

maze("m18_wide_turn", """
#################
#S              #
#               #
#               #
#######         #
      #         #
      #         #
      #        G#
      ###########
""", "Walk to the east wall. Then head south to the corner.")

maze("m19_bathroom", """
####################
#        #         #
#  S     #         #
#                  #
#                  #
#                  #
#        ####   ####
#        #        G#
#        #         #
####################
""", "Walk out of the bedroom. Turn right and enter the bathroom.",
     regions=[("bedroom", 1, 1, 8, 8), ("hall", 10, 1, 18, 5), ("bathroom", 10, 7, 18, 8)],
     objects={})

maze("m20_loop", """
####################
#S                 #
#                  #
#                  #
#     ########     #
#     ########     #
#     ########     #
#     ########     #
#                  #
#G                 #
#                  #
####################
""", "Go east along the top. Come down the right side. Return west along the bottom.")

# Nine-subtask instruction for the stopping rule.
maze("m21_nine_steps", """
##########################################################
#S                                                      G#
#                                                        #
#                                                        #
##########################################################
""", "Start walking. Keep going. Pass the first mark. Pass the second mark. "
     "Keep heading east. Still east. Almost there. Nearly done. Stop at the end.")

# Goal equals start in a cramped closet: every waypoint is under 1 m away.
maze("closet", """
#####
#   #
# S #
#   #
#####
""", "Stay in the closet.")

# Goal sealed off from the start.
maze("sealed", """
##############
#S     #     #
#      #   G #
#      #     #
##############
""", "Walk to the other room.")


def char_center(col, row, rows):
    return [(col + 0.5) * CHAR_M, (rows - 1 - row + 0.5) * CHAR_M]


def build(name, spec, out_root):
    lines = spec["layout"].split("\n")
    rows = len(lines)
    cols = max(len(l) for l in lines)
    lines = [l.ljust(cols, "#") for l in lines]
    free = np.zeros((rows * SCALE, cols * SCALE), dtype=np.uint8)
    start = goal = None
    hints, objects = {}, []
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch != "#":
                free[r * SCALE:(r + 1) * SCALE, c * SCALE:(c + 1) * SCALE] = 255
            p = char_center(c, r, rows)
            if ch == "S":
                start = p
            elif ch == "G":
                goal = p
            elif ch.isdigit():
                hints[int(ch)] = p
            elif ch.islower():
                objects.append({"label": spec["objects"][ch], "position": p})
    if goal is None:  # no G: the goal is the start itself
        goal = start
    assert start, name
    regions = []
    for label, c0, r0, c1, r1 in spec["regions"]:
        x0, x1 = c0 * CHAR_M, (c1 + 1) * CHAR_M
        y0, y1 = (rows - 1 - r1) * CHAR_M, (rows - r0) * CHAR_M
        regions.append({"label": label, "polygon": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]})
    episode = {
        "id": name,
        "start": {"x": start[0], "y": start[1], "yaw_deg": spec["yaw"]},
        "goal": goal,
        "instruction": spec["instruction"],
        "subtask_hints": [hints[k] for k in sorted(hints)],
    }
    if name == "sealed":  # no walkable path exists, so give the straight line
        episode["reference_path"] = [start, goal]
    out = out_root / name
    out.mkdir(parents=True, exist_ok=True)
    h, w = free.shape
    with open(out / "world.pgm", "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(free.tobytes())
    world = {"cell_size": CELL, "wall_height": 2.5, "agent_radius": 0.2,
             "regions": regions, "objects": objects, "episodes": [episode]}
    (out / "world.json").write_text(json.dumps(world, indent=2) + "\n")


def main():
    root = Path(__file__).resolve().parent.parent / "fixtures"
    for name, spec in MAZES.items():
        group = "mazes" if name[0] == "m" and int(name[1:3]) <= 20 else "extra"
        build(name, spec, root / group)
    print(f"wrote {len(MAZES)} bundles to {root}")


if __name__ == "__main__":
    main()
